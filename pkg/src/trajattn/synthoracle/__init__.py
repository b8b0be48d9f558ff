from .gradcheck import check_gradients, numerical_gradient, random_trajectories, relative_error
from .reference import brute_force_reference
from .scene import (
    CAMERA_PATHS,
    SyntheticScene,
    check_trajectory_constancy,
    make_scene,
    orbit,
    pan,
    quantization_bound,
    render_sequence,
    roll,
    shuffle_trajectories,
    warp_compression,
    zoom_in,
    zoom_out,
)
from .fixtures import apply_global, drift_pair, random_extrinsics, random_pose_path, random_rotation
