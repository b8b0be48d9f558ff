"""Naive scalar-loop reimplementations used as oracles for the vectorised kernels.

Written to be obviously correct rather than fast; instances are capped at
``MAX_ELEMENTS`` scalars.
"""
from __future__ import annotations

import math

import numpy as np

MAX_ELEMENTS = 10_000


def _round_half_away(x):
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def _cell(x, y, height, width):
    if not (0 <= x < width and 0 <= y < height):
        raise ValueError(f"valid coordinate ({x}, {y}) outside the {height}x{width} grid")
    ix = min(max(_round_half_away(x), 0), width - 1)
    iy = min(max(_round_half_away(y), 0), height - 1)
    return ix, iy


def ref_sample(z, coords, mask):
    z = np.asarray(z)
    F, H, W, C = z.shape
    L = coords.shape[0]
    out = np.zeros((F, L, C), dtype=z.dtype)
    for f in range(F):
        for i in range(L):
            if mask[f, i]:
                ix, iy = _cell(coords[i, f, 0], coords[i, f, 1], H, W)
                for c in range(C):
                    out[f, i, c] = z[f, iy, ix, c]
    return out


def ref_back_project(data, coords, mask, grid_size):
    H, W = grid_size
    F, L, C = data.shape
    sums = [[[[0.0] * C for _ in range(W)] for _ in range(H)] for _ in range(F)]
    counts = np.zeros((F, H, W), dtype=np.int64)
    for i in range(L):
        for f in range(F):
            if not mask[f, i]:
                continue
            ix, iy = _cell(coords[i, f, 0], coords[i, f, 1], H, W)
            counts[f, iy, ix] += 1
            for c in range(C):
                sums[f][iy][ix][c] += float(data[f, i, c])
    values = np.zeros((F, H, W, C), dtype=data.dtype)
    for f in range(F):
        for y in range(H):
            for x in range(W):
                if counts[f, y, x]:
                    for c in range(C):
                        values[f, y, x, c] = sums[f][y][x][c] / counts[f, y, x]
    return values, counts


def ref_frame_attention(q, k, v, key_mask=None, heads=1, scale=None):
    F, N, C = q.shape
    d = C // heads
    if scale is None:
        scale = 1.0 / math.sqrt(d)
    out = np.zeros(q.shape, dtype=np.result_type(q, k, v))
    for n in range(N):
        for h in range(heads):
            lo = h * d
            for i in range(F):
                logits = []
                for j in range(F):
                    if key_mask is not None and not key_mask[j, n]:
                        logits.append(None)
                        continue
                    s = 0.0
                    for c in range(lo, lo + d):
                        s += float(q[i, n, c]) * float(k[j, n, c])
                    logits.append(s * scale)
                live = [x for x in logits if x is not None]
                if not live:
                    continue
                m = max(live)
                weights = [0.0 if x is None else math.exp(x - m) for x in logits]
                total = sum(weights)
                for c in range(lo, lo + d):
                    acc = 0.0
                    for j in range(F):
                        acc += weights[j] / total * float(v[j, n, c])
                    out[i, n, c] = acc
    return out


def ref_pixel_translation(depth, k, e1, e2):
    K = k.matrix
    K_inv = np.linalg.inv(K)
    T = e2.matrix @ np.linalg.inv(e1.matrix)
    H, W = depth.shape
    field = np.zeros((H, W, 2))
    valid = np.zeros((H, W), dtype=bool)
    for y in range(H):
        for x in range(W):
            ray = K_inv @ np.array([x, y, 1.0])
            p = np.append(ray * depth[y, x], 1.0)
            q = (T @ p)[:3]
            if q[2] <= 1e-6:
                continue
            uvw = K @ q
            field[y, x] = (uvw[0] / uvw[2] - x, uvw[1] / uvw[2] - y)
            valid[y, x] = True
    return field, valid


_OPS = {
    "sample_along_trajectories": ref_sample,
    "back_project": ref_back_project,
    "frame_attention": ref_frame_attention,
    "pixel_translation": ref_pixel_translation,
}


def brute_force_reference(op_name, inputs):
    """Run the scalar-loop oracle for ``op_name`` on a dict of keyword ``inputs``."""
    if op_name not in _OPS:
        raise ValueError(f"no reference for {op_name!r}; choose from {sorted(_OPS)}")
    size = sum(np.size(v) for v in inputs.values() if isinstance(v, np.ndarray))
    if size > MAX_ELEMENTS:
        raise ValueError(f"instance has {size} scalars, above the {MAX_ELEMENTS} limit")
    return _OPS[op_name](**inputs)
