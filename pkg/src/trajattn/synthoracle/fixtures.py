"""Constructed pose fixtures with known metric values."""
from __future__ import annotations

import numpy as np

from ..geomcore import Extrinsics, rotation_about_axis


def random_rotation(rng) -> np.ndarray:
    q = rng.standard_normal(4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_extrinsics(rng, scale=1.0) -> Extrinsics:
    return Extrinsics(random_rotation(rng), rng.standard_normal(3) * scale)


def random_pose_path(rng, n) -> np.ndarray:
    """``(n, 4, 4)`` camera-to-world poses along a wandering, non-collinear path."""
    poses = np.tile(np.eye(4), (n, 1, 1))
    for i in range(1, n):
        step = np.eye(4)
        step[:3, :3] = rotation_about_axis(rng.standard_normal(3), rng.uniform(0.02, 0.2))
        step[:3, 3] = rng.standard_normal(3) * 0.3
        poses[i] = poses[i - 1] @ step
    return poses


def drift_pair(gt, degrees=1.0, axis=(0.0, 0.0, 1.0)):
    """Estimated path whose every step carries an extra rotation of ``degrees`` about ``axis``."""
    gt = np.asarray(gt, dtype=np.float64)
    extra = np.eye(4)
    extra[:3, :3] = rotation_about_axis(axis, np.radians(degrees))
    est = np.empty_like(gt)
    est[0] = gt[0]
    for i in range(1, len(gt)):
        step = np.linalg.inv(gt[i - 1]) @ gt[i]
        est[i] = est[i - 1] @ step @ extra
    return est


def apply_global(poses, transform: Extrinsics) -> np.ndarray:
    """Left-multiply every pose by one rigid transform."""
    return transform.matrix @ np.asarray(poses, dtype=np.float64)
