"""Trajectory sets from camera motion over an image or over a tracked video."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geomcore import Extrinsics, Intrinsics, check_depth, pixel_grid, pixel_translation


@dataclass(eq=False)
class TrajectorySet:
    """``L`` trajectories over ``F`` frames.

    ``coords`` is ``(L, F, 2)`` in ``(x, y)`` order, ``mask`` is ``(F, L)`` bool.
    ``size`` optionally records the ``(height, width)`` of the image the
    coordinates live in.
    """

    coords: np.ndarray
    mask: np.ndarray
    size: Optional[tuple] = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.mask = np.asarray(self.mask)
        if self.coords.ndim != 3 or self.coords.shape[2] != 2:
            raise ValueError(f"coords must have shape (L, F, 2), got {self.coords.shape}")
        L, F = self.coords.shape[:2]
        if self.mask.shape != (F, L):
            raise ValueError(f"mask must have shape (F, L) = {(F, L)}, got {self.mask.shape}")
        if self.mask.dtype != bool:
            if not np.all((self.mask == 0) | (self.mask == 1)):
                raise ValueError("mask entries must be 0 or 1")
            self.mask = self.mask.astype(bool)
        if not np.all(np.isfinite(self.coords.transpose(1, 0, 2)[self.mask])):
            raise ValueError("coords must be finite wherever the mask is set")
        if self.size is not None:
            self.size = (int(self.size[0]), int(self.size[1]))

    @property
    def count(self) -> int:
        return self.coords.shape[0]

    @property
    def frames(self) -> int:
        return self.coords.shape[1]

    @property
    def valid_fraction(self) -> float:
        return float(self.mask.mean()) if self.mask.size else 0.0

    def __eq__(self, other):
        if not isinstance(other, TrajectorySet):
            return NotImplemented
        return (np.array_equal(self.coords, other.coords)
                and np.array_equal(self.mask, other.mask))


@dataclass(eq=False)
class PointTracks:
    """Tracker output: ``positions`` ``(F, L, 2)`` and ``visible`` ``(F, L)``."""

    positions: np.ndarray
    visible: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.visible = np.asarray(self.visible)
        if self.positions.ndim != 3 or self.positions.shape[2] != 2:
            raise ValueError(f"positions must have shape (F, L, 2), got {self.positions.shape}")
        if self.visible.shape != self.positions.shape[:2]:
            raise ValueError(f"visibility shape {self.visible.shape} does not match positions {self.positions.shape[:2]}")
        if self.visible.dtype != bool:
            if not np.all((self.visible == 0) | (self.visible == 1)):
                raise ValueError("occlusion flags must be 0 or 1")
            self.visible = self.visible.astype(bool)
        if not np.all(np.isfinite(self.positions[self.visible])):
            raise ValueError("positions must be finite where visible")

    @property
    def frames(self) -> int:
        return self.positions.shape[0]

    @property
    def count(self) -> int:
        return self.positions.shape[1]


def in_bounds(xy, height, width) -> np.ndarray:
    """True where ``xy[..., 0]`` is in ``[0, width)`` and ``xy[..., 1]`` in ``[0, height)``."""
    xy = np.asarray(xy)
    x, y = xy[..., 0], xy[..., 1]
    with np.errstate(invalid="ignore"):
        return (x >= 0) & (x < width) & (y >= 0) & (y < height)


def extract_from_image(depth, k: Intrinsics, poses: Sequence[Extrinsics]) -> TrajectorySet:
    """One trajectory per pixel of ``depth``, following the camera path ``poses``.

    ``poses[0]`` is the view the depth map belongs to. Trajectory ``l`` starts
    at pixel ``(l % W, l // W)``.
    """
    if len(poses) == 0:
        raise ValueError("need at least one pose")
    depth = check_depth(depth)
    h, w = depth.shape
    grid = pixel_grid(h, w).reshape(-1, 2).astype(np.float64)
    F, L = len(poses), h * w
    coords = np.empty((L, F, 2))
    mask = np.empty((F, L), dtype=bool)
    coords[:, 0] = grid
    mask[0] = True
    for f in range(1, F):
        field, valid = pixel_translation(depth, k, poses[0], poses[f])
        coords[:, f] = grid + field.reshape(-1, 2)
        mask[f] = valid.reshape(-1) & in_bounds(coords[:, f], h, w)
    return TrajectorySet(coords, mask, size=(h, w))


def bilinear_sample(field, xy):
    """Sample ``field`` ``(H, W, D)`` at continuous ``xy`` ``(..., 2)``; positions are clamped to the grid."""
    field = np.asarray(field)
    h, w = field.shape[:2]
    x = np.clip(xy[..., 0], 0.0, w - 1.0)
    y = np.clip(xy[..., 1], 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.int64), w - 1)
    y0 = np.minimum(np.floor(y).astype(np.int64), h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = (x - x0)[..., None]
    ay = (y - y0)[..., None]
    top = field[y0, x0] * (1 - ax) + field[y0, x1] * ax
    bottom = field[y1, x0] * (1 - ax) + field[y1, x1] * ax
    return top * (1 - ay) + bottom * ay


def extract_from_video(tracks: PointTracks, depths, k: Intrinsics,
                       poses: Sequence[Extrinsics]) -> TrajectorySet:
    """Combine a video's own point tracks with an added camera motion.

    The translation field of frame ``f`` is computed from that frame's depth,
    moving from ``poses[0]`` to ``poses[f]``, and sampled bilinearly at the
    tracked positions. A track entry is valid when it is visible, lands in the
    image and every field sample it touches is geometrically valid.
    """
    F = tracks.frames
    if len(depths) != F or len(poses) != F:
        raise ValueError(f"frame count mismatch: tracks have {F} frames, "
                         f"{len(depths)} depth maps, {len(poses)} poses")
    if F == 0:
        raise ValueError("need at least one frame")
    coords = np.empty((tracks.count, F, 2))
    geom_ok = np.ones((F, tracks.count), dtype=bool)
    h = w = None
    for f in range(F):
        depth = check_depth(depths[f])
        if h is None:
            h, w = depth.shape
        elif depth.shape != (h, w):
            raise ValueError(f"depth map {f} has shape {depth.shape}, expected {(h, w)}")
        finite = np.all(np.isfinite(tracks.positions[f]), axis=-1)
        pos = np.where(finite[:, None], tracks.positions[f], 0.0)
        field, valid = pixel_translation(depth, k, poses[0], poses[f])
        coords[:, f] = pos + bilinear_sample(field, pos)
        # a sample is valid only if all four bilinear neighbours are
        geom_ok[f] = _neighbours_valid(valid, pos)
    mask = in_bounds(coords.transpose(1, 0, 2), h, w) & tracks.visible & geom_ok
    return TrajectorySet(coords, mask, size=(h, w))


def _neighbours_valid(valid, xy):
    h, w = valid.shape
    x = np.clip(xy[..., 0], 0.0, w - 1.0)
    y = np.clip(xy[..., 1], 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    return valid[y0, x0] & valid[y0, x1] & valid[y1, x0] & valid[y1, x1]


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def sparsify(ts: TrajectorySet, stride: int = 1, region=None) -> TrajectorySet:
    """Keep trajectories whose frame-0 position is on the ``stride`` grid.

    ``region`` is an optional boolean ``(H, W)`` array; when given, only
    trajectories starting inside it survive. Frame-0 positions are rounded to
    the nearest cell before both tests.
    """
    if int(stride) != stride or stride < 1:
        raise ValueError(f"stride must be an integer >= 1, got {stride}")
    stride = int(stride)
    start = round_half_away(ts.coords[:, 0]).astype(np.int64)
    keep = (start[:, 0] % stride == 0) & (start[:, 1] % stride == 0)
    if region is not None:
        region = np.asarray(region, dtype=bool)
        rh, rw = region.shape
        inside = (start[:, 0] >= 0) & (start[:, 0] < rw) & (start[:, 1] >= 0) & (start[:, 1] < rh)
        sx = np.clip(start[:, 0], 0, rw - 1)
        sy = np.clip(start[:, 1], 0, rh - 1)
        keep &= inside & region[sy, sx]
    return TrajectorySet(ts.coords[keep], ts.mask[:, keep], size=ts.size)


def rescale_to_latent(ts: TrajectorySet, scale, latent_size=None, thin=True) -> TrajectorySet:
    """Map pixel-space trajectories onto a latent grid ``scale`` times smaller.

    The latent bounds are ``latent_size`` when given, else
    ``floor(size * scale)``. With ``thin`` the set is first sparsified with
    stride ``round(1 / scale)`` so roughly one trajectory lands per latent cell.
    """
    scale = float(scale)
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    if latent_size is None:
        if ts.size is None:
            raise ValueError("latent_size is required when the trajectory set has no image size")
        latent_size = (int(np.floor(ts.size[0] * scale)), int(np.floor(ts.size[1] * scale)))
    lh, lw = latent_size
    if thin:
        ts = sparsify(ts, stride=max(1, int(round_half_away(1.0 / scale))))
    coords = ts.coords * scale
    mask = ts.mask & in_bounds(coords.transpose(1, 0, 2), lh, lw)
    return TrajectorySet(coords, mask, size=(lh, lw))


def identity_trajectories(frames, height, width) -> TrajectorySet:
    """Trajectories that stay on their own grid cell, all valid."""
    grid = pixel_grid(height, width).reshape(-1, 1, 2).astype(np.float64)
    coords = np.broadcast_to(grid, (height * width, frames, 2)).copy()
    return TrajectorySet(coords, np.ones((frames, height * width), dtype=bool), size=(height, width))
