"""Absolute and relative pose error between camera trajectories.

Poses here are camera-to-world transforms; the camera center is the
translation part.
"""
from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .geomcore import Extrinsics


class DegenerateInputError(ValueError):
    pass


class RPE(NamedTuple):
    trans_m: float
    rot_deg: float


def _as_matrices(poses) -> np.ndarray:
    if isinstance(poses, np.ndarray):
        mats = np.asarray(poses, dtype=np.float64)
    else:
        mats = np.stack([p.matrix if isinstance(p, Extrinsics) else np.asarray(p, dtype=np.float64)
                         for p in poses]) if len(poses) else np.zeros((0, 4, 4))
    if mats.ndim != 3 or mats.shape[1:] != (4, 4):
        raise ValueError(f"expected a sequence of 4x4 poses, got shape {mats.shape}")
    return mats


def _check_pair(est, gt):
    est, gt = _as_matrices(est), _as_matrices(gt)
    if len(est) != len(gt):
        raise ValueError(f"trajectory lengths differ: {len(est)} estimated vs {len(gt)} ground truth")
    if len(est) == 0:
        raise ValueError("empty trajectories")
    return est, gt


def rigid_align(est, gt, with_scale=False):
    """Least-squares ``(transform, scale)`` with ``gt_center ~ scale * R @ est_center + t``.

    Closed-form Umeyama solution on the camera centers.
    """
    est, gt = _check_pair(est, gt)
    src = est[:, :3, 3]
    dst = gt[:, :3, 3]
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    xs, xd = src - mu_s, dst - mu_d
    var_s = (xs * xs).sum() / len(src)
    if var_s <= 1e-24 or (xd * xd).sum() / len(dst) <= 1e-24:
        raise DegenerateInputError("camera centers are all identical; alignment is undefined")
    if np.array_equal(src, dst):
        # skip the SVD so identical inputs align to an exact identity
        return Extrinsics.identity(), 1.0
    cov = xd.T @ xs / len(src)
    U, S, Vt = np.linalg.svd(cov)
    D = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        D[2, 2] = -1.0
    R = U @ D @ Vt
    scale = float(np.trace(np.diag(S) @ D) / var_s) if with_scale else 1.0
    t = mu_d - scale * R @ mu_s
    return Extrinsics(R, t), scale


def _aligned_residuals(est, gt, with_scale=False):
    T, s = rigid_align(est, gt, with_scale)
    aligned = s * est[:, :3, 3] @ T.rotation.T + T.translation
    return aligned - gt[:, :3, 3]


def ate(est, gt, with_scale=False) -> float:
    """Root-mean-square camera-center error after rigid alignment (meters)."""
    est, gt = _check_pair(est, gt)
    res = _aligned_residuals(est, gt, with_scale)
    return float(np.sqrt(np.mean(np.sum(res * res, axis=1))))


def _inv(m):
    out = np.zeros_like(m)
    Rt = m[..., :3, :3].swapaxes(-1, -2)
    out[..., :3, :3] = Rt
    out[..., :3, 3] = -(Rt @ m[..., :3, 3:])[..., 0]
    out[..., 3, 3] = 1.0
    return out


def rotation_angle(R) -> np.ndarray:
    """Rotation angle in radians of ``(..., 3, 3)`` matrices.

    The cosine comes from the trace, clamped to ``[-1, 1]``; the sine from the
    skew-symmetric part. Using both keeps small angles accurate.
    """
    R = np.asarray(R, dtype=np.float64)
    cos = np.clip((np.trace(R, axis1=-2, axis2=-1) - 1.0) / 2.0, -1.0, 1.0)
    skew = np.stack([R[..., 2, 1] - R[..., 1, 2],
                     R[..., 0, 2] - R[..., 2, 0],
                     R[..., 1, 0] - R[..., 0, 1]], axis=-1)
    sin = np.linalg.norm(skew, axis=-1) / 2.0
    return np.arctan2(sin, cos)


def rpe(est, gt, delta: int = 1) -> RPE:
    """Relative pose error over steps of ``delta`` frames.

    Returns the RMS translation drift (meters) and RMS rotation drift (degrees).
    """
    est, gt = _check_pair(est, gt)
    if int(delta) != delta or delta < 1:
        raise ValueError(f"delta must be a positive integer, got {delta}")
    if len(est) <= delta:
        raise ValueError(f"need more than delta={delta} poses, got {len(est)}")
    d_est = _inv(est[:-delta]) @ est[delta:]
    d_gt = _inv(gt[:-delta]) @ gt[delta:]
    err = _inv(d_gt) @ d_est
    trans = np.linalg.norm(err[:, :3, 3], axis=1)
    rot = np.degrees(rotation_angle(err[:, :3, :3]))
    return RPE(float(np.sqrt(np.mean(trans ** 2))), float(np.sqrt(np.mean(rot ** 2))))


def evaluate(est: Sequence, gt: Sequence, delta: int = 1) -> dict:
    """ATE and RPE as a flat report dictionary."""
    r = rpe(est, gt, delta)
    return {"ate_m": ate(est, gt), "rpe_trans_m": r.trans_m, "rpe_rot_deg": r.rot_deg}
