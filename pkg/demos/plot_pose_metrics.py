"""
Pose accuracy: ATE and RPE
==========================

Compare an estimated camera path to ground truth after rigid alignment.
"""

import numpy as np

from trajattn import evalmetrics as em
from trajattn.synthoracle import apply_global, drift_pair, random_extrinsics, random_pose_path

rng = np.random.default_rng(4)
gt = random_pose_path(rng, 20)  # camera-to-world 4x4 poses

# A global rigid motion of the whole estimate is invisible to both metrics.
moved = apply_global(gt, random_extrinsics(rng))
print("globally moved:", em.evaluate(moved, gt))

# A constant extra rotation per step shows up as RPE-rot and accumulates into ATE.
for deg in (0.25, 1.0, 2.0):
    print(f"{deg} deg/step drift:", {k: round(v, 6) for k, v in em.evaluate(drift_pair(gt, deg), gt).items()})

# Noisy estimate, and the effect of the RPE step size.
noisy = gt.copy()
noisy[:, :3, 3] += rng.normal(scale=0.02, size=(20, 3))
for delta in (1, 5):
    r = em.rpe(noisy, gt, delta)
    print(f"noisy, delta={delta}: trans {r.trans_m:.4f} m, rot {r.rot_deg:.4f} deg")
print(f"noisy ATE {em.ate(noisy, gt):.4f} m")
