"""Pinhole camera model, rigid pose algebra and depth-based pixel translation.

Conventions: ``x`` is the column index and ``y`` the row index. Extrinsics map
world coordinates into the camera frame (``p_cam = R @ p_world + t``). Depth is
the camera-frame z of the source view. All geometry runs in float64.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# transformed depth at or below this is treated as behind the camera
BEHIND_CAMERA_EPS = 1e-6

_ORTHO_TOL = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @property
    def inverse_matrix(self) -> np.ndarray:
        return np.array([[1.0 / self.fx, 0.0, -self.cx / self.fx],
                         [0.0, 1.0 / self.fy, -self.cy / self.fy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class Extrinsics:
    """Rigid world-to-camera transform ``[R | t]``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("extrinsics must be finite")
        if np.abs(R.T @ R - np.eye(3)).max() > _ORTHO_TOL or np.linalg.det(R) < 0:
            raise ValueError("rotation must be orthonormal with determinant +1")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Extrinsics":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "Extrinsics":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=0.0):
            raise ValueError("homogeneous bottom row must be (0, 0, 0, 1)")
        return cls(m[:3, :3], m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Extrinsics":
        Rt = self.rotation.T
        return Extrinsics(Rt, -Rt @ self.translation)

    def apply(self, points) -> np.ndarray:
        """Transform ``(..., 3)`` points."""
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def __eq__(self, other):
        if not isinstance(other, Extrinsics):
            return NotImplemented
        return (np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))

    __hash__ = None


def make_default_intrinsics(width, height, focal=260.0) -> Intrinsics:
    """Principal point at the image center, equal focal lengths."""
    if width <= 0 or height <= 0 or focal <= 0:
        raise ValueError(f"width, height and focal must be positive, got {width}, {height}, {focal}")
    return Intrinsics(fx=float(focal), fy=float(focal), cx=width / 2.0, cy=height / 2.0)


def relative_transform(e1: Extrinsics, e2: Extrinsics) -> Extrinsics:
    """Return ``E2 @ inv(E1)``, mapping camera-1 coordinates to camera-2 coordinates."""
    if e1 == e2:
        return Extrinsics.identity()
    R = e2.rotation @ e1.rotation.T
    t = e2.translation - R @ e1.translation
    # re-orthonormalize to keep round-off from accumulating across compositions
    u, _, vt = np.linalg.svd(R)
    R = u @ vt
    return Extrinsics(R, t)


def check_depth(depth) -> np.ndarray:
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2 or depth.size == 0:
        raise ValueError(f"depth map must be a non-empty 2D array, got shape {depth.shape}")
    if not np.all(np.isfinite(depth)) or np.any(depth <= 0):
        raise ValueError("depth values must be finite and positive")
    return depth


def pixel_grid(height, width) -> np.ndarray:
    """Integer ``(x, y)`` coordinates with shape ``(height, width, 2)``."""
    ys, xs = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    return np.stack([xs, ys], axis=-1)


def unproject(depth, k: Intrinsics) -> np.ndarray:
    """Camera-frame 3D points ``(H, W, 3)`` for every pixel of ``depth``."""
    depth = check_depth(depth)
    h, w = depth.shape
    grid = pixel_grid(h, w).astype(np.float64)
    homo = np.concatenate([grid, np.ones((h, w, 1))], axis=-1)
    rays = homo @ k.inverse_matrix.T
    return rays * depth[..., None]


def project(points, k: Intrinsics):
    """Project camera-frame points; returns ``(uv, valid)``.

    Points with ``z <= BEHIND_CAMERA_EPS`` get ``valid=False`` and ``uv`` set to 0.
    """
    points = np.asarray(points, dtype=np.float64)
    z = points[..., 2]
    valid = z > BEHIND_CAMERA_EPS
    safe_z = np.where(valid, z, 1.0)
    homo = points @ k.matrix.T
    uv = homo[..., :2] / safe_z[..., None]
    uv = np.where(valid[..., None], uv, 0.0)
    return uv, valid


def pixel_translation(depth, k: Intrinsics, e1: Extrinsics, e2: Extrinsics):
    """Per-pixel displacement from view 1 to view 2.

    Returns ``(field, valid)`` where ``field`` is ``(H, W, 2)`` holding
    ``(dx, dy)`` and ``valid`` flags pixels whose transformed point stays in
    front of camera 2. Invalid pixels carry a zero displacement.
    """
    depth = check_depth(depth)
    rel = relative_transform(e1, e2)
    h, w = depth.shape
    if rel == Extrinsics.identity():
        return np.zeros((h, w, 2)), np.ones((h, w), dtype=bool)
    moved = rel.apply(unproject(depth, k))
    uv, valid = project(moved, k)
    field = uv - pixel_grid(h, w)
    field[~valid] = 0.0
    return field, valid


def rotation_about_axis(axis, angle) -> np.ndarray:
    """Rodrigues rotation matrix for ``angle`` radians about ``axis``."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    K = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)
