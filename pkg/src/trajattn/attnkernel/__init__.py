from .attention import (
    MAX_SPACETIME_TOKENS,
    AttentionProfile,
    AttentionWeights,
    attention_probs,
    attention_stats,
    frame_attention,
    full_spacetime_attention,
    init_branch_from_temporal,
    linear_project,
    temporal_attention,
)
from .grad import (
    WeightGrads,
    back_project_backward,
    denoising_loss_backward,
    frame_attention_backward,
    fuse_backward,
    linear_project_backward,
    sample_backward,
    temporal_attention_backward,
    trajectory_branch_backward,
)
from .loss import DenoisingBatch, denoising_loss
from .trajectory import (
    BackProjection,
    TrajFeatures,
    back_project,
    fuse,
    sample_along_trajectories,
    trajectory_branch,
    trajectory_cells,
)
