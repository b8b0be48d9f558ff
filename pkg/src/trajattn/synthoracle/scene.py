"""Synthetic scenes with exact depth, forward-splat rendering and constancy checks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geomcore import (Extrinsics, Intrinsics, check_depth, make_default_intrinsics, project,
                        rotation_about_axis, unproject)
from ..trajgen import TrajectorySet, round_half_away

BASE_DEPTH = 2.0
DEPTH_AMPLITUDE = 0.25


@dataclass(eq=False)
class SyntheticScene:
    texture: np.ndarray  # (H, W, C)
    depth: np.ndarray  # (H, W), meters
    intrinsics: Intrinsics

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]


def value_noise(rng, height, width, channels, cell):
    """Smoothstep-interpolated lattice noise in ``[0, 1)``."""
    gy = int(np.ceil(height / cell)) + 2
    gx = int(np.ceil(width / cell)) + 2
    lattice = rng.random((gy, gx, channels))
    u = np.arange(width) / cell
    v = np.arange(height) / cell
    i, j = np.floor(u).astype(int), np.floor(v).astype(int)
    s = u - i
    t = v - j
    s = (s * s * (3 - 2 * s))[None, :, None]
    t = (t * t * (3 - 2 * t))[:, None, None]
    J, I = np.meshgrid(j, i, indexing="ij")
    top = lattice[J, I] * (1 - s) + lattice[J, I + 1] * s
    bottom = lattice[J + 1, I] * (1 - s) + lattice[J + 1, I + 1] * s
    return top * (1 - t) + bottom * t


def make_scene(seed, width, height, channels, amplitude=DEPTH_AMPLITUDE, base_depth=BASE_DEPTH,
               focal=260.0, cell=None, dtype=np.float32) -> SyntheticScene:
    """Seeded smooth texture over the depth surface ``d0 + a sin(2 pi x / W) sin(2 pi y / H)``.

    ``cell`` is the noise lattice spacing in pixels (default: half the larger
    image side).
    """
    if width < 1 or height < 1 or channels < 1:
        raise ValueError("scene dimensions must be positive")
    cell = max(width, height) / 2.0 if cell is None else float(cell)
    rng = np.random.default_rng(seed)
    texture = value_noise(rng, height, width, channels, cell).astype(dtype)
    ys, xs = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    depth = base_depth + amplitude * np.sin(2 * np.pi * xs / width) * np.sin(2 * np.pi * ys / height)
    return SyntheticScene(texture, check_depth(depth), make_default_intrinsics(width, height, focal))


def render_sequence(scene: SyntheticScene, poses) -> np.ndarray:
    """Forward-splat the scene into each pose with a z-buffer.

    The scene surface is the depth map seen from ``poses[0]``. Returns an
    ``(F, H, W, C + 1)`` volume; the last channel is 1 at pixels no scene
    point reached (their texture channels are 0).
    """
    H, W, C = scene.texture.shape
    world = poses[0].inverse().apply(unproject(scene.depth, scene.intrinsics)).reshape(-1, 3)
    colors = scene.texture.reshape(-1, C)
    index = np.arange(H * W)
    out = np.zeros((len(poses), H, W, C + 1), dtype=scene.texture.dtype)
    for f, pose in enumerate(poses):
        cam = pose.apply(world)
        uv, valid = project(cam, scene.intrinsics)
        cells = round_half_away(uv).astype(np.int64)
        ok = valid & (cells[:, 0] >= 0) & (cells[:, 0] < W) & (cells[:, 1] >= 0) & (cells[:, 1] < H)
        z, src = cam[ok, 2], index[ok]
        cell = cells[ok, 1] * W + cells[ok, 0]
        # per cell: nearest point first, lowest source index on ties
        order = np.lexsort((src, z, cell))
        first = np.unique(cell[order], return_index=True)[1]
        winners = order[first]
        frame = np.zeros((H * W, C), dtype=out.dtype)
        hit = np.zeros(H * W, dtype=bool)
        frame[cell[winners]] = colors[src[winners]]
        hit[cell[winners]] = True
        frame = frame.reshape(H, W, C)
        hit = hit.reshape(H, W)
        out[f, ..., :C] = frame
        out[f, ..., C] = ~hit
    return out


def _camera(center, cam_to_world_rot) -> Extrinsics:
    R = np.asarray(cam_to_world_rot).T
    return Extrinsics(R, -R @ np.asarray(center, dtype=np.float64))


def _ramp(frames):
    return np.linspace(0.0, 1.0, frames) if frames > 1 else np.zeros(1)


def pan(frames, distance=0.1):
    """Sideways translation along +x by ``distance`` meters in total."""
    return [_camera([distance * s, 0.0, 0.0], np.eye(3)) for s in _ramp(frames)]


def zoom_in(frames, distance=0.3):
    return [_camera([0.0, 0.0, distance * s], np.eye(3)) for s in _ramp(frames)]


def zoom_out(frames, distance=0.3):
    return [_camera([0.0, 0.0, -distance * s], np.eye(3)) for s in _ramp(frames)]


def orbit(frames, degrees=3.0, radius=BASE_DEPTH):
    """Circle about a vertical axis through the point ``radius`` meters ahead."""
    pivot = np.array([0.0, 0.0, radius])
    poses = []
    for s in _ramp(frames):
        R = rotation_about_axis([0.0, 1.0, 0.0], np.radians(degrees * s))
        poses.append(_camera(pivot - R @ pivot, R))
    return poses


def roll(frames, degrees=20.0):
    """Clockwise rotation about the optical axis."""
    return [_camera(np.zeros(3), rotation_about_axis([0.0, 0.0, 1.0], -np.radians(degrees * s)))
            for s in _ramp(frames)]


CAMERA_PATHS = {"pan": pan, "zoom_in": zoom_in, "zoom_out": zoom_out, "orbit": orbit, "roll": roll}


def check_trajectory_constancy(volume, ts: TrajectorySet, hole_channel=True, per_trajectory=False):
    """Largest channel deviation from the frame-0 feature along any valid trajectory.

    Features are read at the nearest cell. Entries whose cell falls off the
    grid, or lands on a hole pixel, are skipped.
    """
    volume = np.asarray(volume)
    feats = volume[..., :-1] if hole_channel else volume
    holes = volume[..., -1] > 0.5 if hole_channel else np.zeros(volume.shape[:3], dtype=bool)
    F, H, W, _ = feats.shape
    if ts.frames != F:
        raise ValueError(f"trajectories span {ts.frames} frames, volume has {F}")
    cells = round_half_away(np.where(ts.mask.T[..., None], ts.coords, 0.0)).astype(np.int64)
    ix, iy = cells[..., 0].T, cells[..., 1].T  # (F, L)
    usable = ts.mask & (ix >= 0) & (ix < W) & (iy >= 0) & (iy < H)
    fi = np.arange(F)[:, None]
    ixc, iyc = np.clip(ix, 0, W - 1), np.clip(iy, 0, H - 1)
    usable &= ~holes[fi, iyc, ixc]
    usable &= usable[0][None, :]
    sampled = feats[fi, iyc, ixc].astype(np.float64)
    dev = np.abs(sampled - sampled[0][None]).max(axis=-1)
    dev = np.where(usable, dev, 0.0).max(axis=0)
    if per_trajectory:
        return dev
    return float(dev.max()) if dev.size else 0.0


def shuffle_trajectories(ts: TrajectorySet, rng) -> TrajectorySet:
    """Keep each frame-0 start but splice in another trajectory's later path."""
    rng = np.random.default_rng(rng)
    perm = rng.permutation(ts.count)
    coords = ts.coords.copy()
    coords[:, 1:] = ts.coords[perm, 1:]
    mask = ts.mask.copy()
    mask[1:] = ts.mask[1:, perm]
    return TrajectorySet(coords, mask, size=ts.size)


def warp_compression(ts: TrajectorySet) -> float:
    """Largest inverse singular value of the frame-0-to-frame-f warp Jacobian.

    ``ts`` must be a dense per-pixel set as produced by ``extract_from_image``.
    Only cells whose three neighbouring trajectories are valid contribute.
    """
    H, W = ts.size
    worst = 1.0
    for f in range(1, ts.frames):
        X = ts.coords[:, f].reshape(H, W, 2)
        m = ts.mask[f].reshape(H, W)
        dx = (X[:-1, 1:] - X[:-1, :-1])
        dy = (X[1:, :-1] - X[:-1, :-1])
        ok = m[:-1, :-1] & m[:-1, 1:] & m[1:, :-1]
        if not ok.any():
            continue
        J = np.stack([dx[ok], dy[ok]], axis=-1)
        smin = np.linalg.svd(J, compute_uv=False)[:, -1]
        worst = max(worst, float((1.0 / smin).max()))
    return worst


def quantization_bound(texture, compression) -> float:
    """Max texture change between pixels a rendered cell can confuse.

    Two source pixels that land in the same target cell are less than
    ``sqrt(2)`` apart after warping, so at most ``sqrt(2) * compression``
    apart in the source image. The bound is the largest channel difference
    over all pixel pairs within that radius.
    """
    tex = np.asarray(texture, dtype=np.float64)
    H, W, _ = tex.shape
    radius = np.sqrt(2.0) * compression
    r = int(np.floor(radius))
    bound = 0.0
    for dy in range(0, r + 1):
        for dx in range(-r, r + 1):
            if (dy == 0 and dx <= 0) or dx * dx + dy * dy > radius * radius:
                continue
            a = tex[max(0, -dy):H - max(0, dy), max(0, -dx):W - max(0, dx)]
            b = tex[max(0, dy):H - max(0, -dy), max(0, dx):W - max(0, -dx)]
            if a.size:
                bound = max(bound, float(np.abs(a - b).max()))
    return bound
