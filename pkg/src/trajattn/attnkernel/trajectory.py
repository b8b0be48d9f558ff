"""Gather features along trajectories, attend, and scatter them back."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..trajgen import TrajectorySet, in_bounds, round_half_away
from .attention import AttentionWeights, check_volume, frame_attention, linear_project


@dataclass(eq=False)
class TrajFeatures:
    """Features sampled along trajectories: ``data`` ``(F, L, C)``, ``mask`` ``(F, L)``."""

    data: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.data.ndim != 3 or self.mask.shape != self.data.shape[:2]:
            raise ValueError(f"data {self.data.shape} and mask {self.mask.shape} do not agree")


class BackProjection(NamedTuple):
    values: np.ndarray
    counts: np.ndarray


def trajectory_cells(ts: TrajectorySet, height, width):
    """Integer ``(ix, iy)`` cells, each ``(F, L)``, for the trajectory coordinates.

    Rounds half away from zero and clamps to the grid. Masked entries map to
    cell ``(0, 0)`` and must be ignored by callers. Raises ``ValueError`` if a
    valid entry lies outside ``[0, width) x [0, height)``.
    """
    xy = ts.coords.transpose(1, 0, 2)
    mask = ts.mask
    if np.any(mask & ~in_bounds(xy, height, width)):
        raise ValueError(f"valid trajectory coordinates fall outside the {height}x{width} grid")
    safe = np.where(mask[..., None], xy, 0.0)
    cells = round_half_away(safe).astype(np.int64)
    ix = np.clip(cells[..., 0], 0, width - 1)
    iy = np.clip(cells[..., 1], 0, height - 1)
    return ix, iy


def sample_along_trajectories(z, ts: TrajectorySet) -> TrajFeatures:
    """Gather ``z[f, y, x]`` at every trajectory point; masked rows are exactly zero."""
    z = check_volume(z)
    F, H, W, C = z.shape
    if ts.frames != F:
        raise ValueError(f"trajectories span {ts.frames} frames, volume has {F}")
    ix, iy = trajectory_cells(ts, H, W)
    gathered = z[np.arange(F)[:, None], iy, ix]
    data = np.where(ts.mask[..., None], gathered, np.zeros((), dtype=z.dtype))
    return TrajFeatures(np.ascontiguousarray(data), ts.mask.copy())


def back_project(zt, ts: TrajectorySet, grid_size) -> BackProjection:
    """Scatter-average trajectory features onto an ``(F, H, W, C)`` grid.

    ``grid_size`` is ``(H, W)``. Each valid entry adds its feature to its cell
    and one to the cell's count; cells are then divided by their count. Sums
    are accumulated in float64, in ascending ``(frame, trajectory)`` order.
    """
    data = zt.data if isinstance(zt, TrajFeatures) else np.asarray(zt)
    H, W = grid_size
    F, L = ts.mask.shape
    if data.ndim != 3 or data.shape[:2] != (F, L):
        raise ValueError(f"features of shape {data.shape} do not match {L} trajectories over {F} frames")
    C = data.shape[2]
    ix, iy = trajectory_cells(ts, H, W)
    flat = ((np.arange(F)[:, None] * H + iy) * W + ix)[ts.mask]
    acc = np.zeros((F * H * W, C))
    np.add.at(acc, flat, data[ts.mask].astype(np.float64))
    counts = np.bincount(flat, minlength=F * H * W)
    hit = counts > 0
    acc[hit] /= counts[hit, None]
    dtype = data.dtype if np.issubdtype(data.dtype, np.floating) else np.float64
    return BackProjection(acc.reshape(F, H, W, C).astype(dtype), counts.reshape(F, H, W))


def trajectory_branch(z, ts: TrajectorySet, w: AttentionWeights, return_probs=False):
    """Sample along ``ts``, attend across frames with ``w``, and back-project.

    Invalid trajectory entries are excluded both as keys and as queries.
    """
    z = check_volume(z)
    F, H, W, C = z.shape
    if C != w.channels:
        raise ValueError(f"volume has {C} channels but weights expect {w.channels}")
    tf = sample_along_trajectories(z, ts)
    q = linear_project(tf.data, w.wq)
    k = linear_project(tf.data, w.wk)
    v = linear_project(tf.data, w.wv)
    res = frame_attention(q, k, v, key_mask=tf.mask, query_mask=tf.mask, heads=w.heads,
                          return_probs=return_probs)
    out, probs = res if return_probs else (res, None)
    out = linear_project(out, w.wo)
    values = back_project(TrajFeatures(out, tf.mask), ts, (H, W)).values
    return (values, probs) if return_probs else values


def fuse(temporal_out, branch_out):
    """Add the trajectory branch to the temporal output as a residual."""
    temporal_out = np.asarray(temporal_out)
    branch_out = np.asarray(branch_out)
    if temporal_out.shape != branch_out.shape:
        raise ValueError(f"cannot fuse shapes {temporal_out.shape} and {branch_out.shape}")
    return temporal_out + branch_out
