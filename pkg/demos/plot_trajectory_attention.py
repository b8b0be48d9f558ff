"""
Trajectory attention as a zero-initialised branch
=================================================

Attach a trajectory branch to temporal attention, confirm it starts as an
exact no-op, then give it an output projector and look at where it attends.
"""

import numpy as np

from trajattn import attnkernel as ak
from trajattn import trajgen as tg
from trajattn.synthoracle import CAMERA_PATHS, make_scene

rng = np.random.default_rng(0)
F, H, W, C = 8, 8, 8, 16
z = rng.standard_normal((F, H, W, C)).astype(np.float32)
w = ak.AttentionWeights.random(C, heads=4, rng=rng)

# Trajectories from a pan over a 64x64 image, brought down to the 8x8 latent grid.
scene = make_scene(0, 64, 64, 1)
ts = tg.rescale_to_latent(tg.extract_from_image(scene.depth, scene.intrinsics, CAMERA_PATHS["pan"](F, 0.4)), 1 / 8)
print(f"{ts.count} latent trajectories, {ts.valid_fraction:.1%} valid")

# The branch inherits Q/K/V from temporal attention and starts with a zero
# output projector, so adding it changes nothing, bit for bit.
branch_w = ak.init_branch_from_temporal(w)
base = ak.temporal_attention(z, w)
fused = ak.fuse(base, ak.trajectory_branch(z, ts, branch_w))
print("fused == temporal:", fused.tobytes() == base.tobytes())

# Once training moves wo away from zero the branch contributes a residual.
trained = ak.AttentionWeights(branch_w.wq, branch_w.wk, branch_w.wv, w.wo, heads=4)
delta = ak.trajectory_branch(z, ts, trained)
print(f"residual norm with a non-zero wo: {np.linalg.norm(delta):.3f}")

# Sampling and back projection are inverse maps on dense identity trajectories.
dense = tg.identity_trajectories(F, H, W)
bp = ak.back_project(ak.sample_along_trajectories(z, dense), dense, (H, W))
print("identity round trip exact:", np.array_equal(bp.values, z), "| counts all 1:", bool((bp.counts == 1).all()))

# Attention-map statistics: mean weight by frame offset.
_, probs = ak.temporal_attention(z, w, return_probs=True)
profile = ak.attention_stats(probs.reshape(-1, F, F))
print("temporal attention by frame offset:", np.round(profile.by_offset, 3).tolist())
_, probs = ak.trajectory_branch(z, ts, w, return_probs=True)
# only trajectories valid in every frame have fully normalised maps
complete = ts.mask.all(axis=0)
profile = ak.attention_stats(probs[complete].reshape(-1, F, F))
print("trajectory attention by frame offset:", np.round(profile.by_offset, 3).tolist())
