"""Projection and softmax attention along the frame axis.

Tensors follow the ``(F, N, C)`` layout: ``F`` frames, ``N`` independent token
columns and ``C`` channels. Arithmetic runs in float64 and results are cast
back to the storage dtype of the inputs, so float32 volumes get 64-bit
accumulation for free and float64 volumes stay exact end to end.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

MAX_SPACETIME_TOKENS = 4096


@dataclass(eq=False)
class AttentionWeights:
    """Query/key/value/output projectors of one attention block.

    Each matrix is ``C x C`` and maps a channel vector ``x`` to ``w @ x``.
    Projectors carry no bias.
    """

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    heads: int = 4

    def __post_init__(self):
        mats = [np.asarray(getattr(self, n)) for n in ("wq", "wk", "wv", "wo")]
        C = mats[0].shape[0] if mats[0].ndim == 2 else -1
        for name, m in zip(("wq", "wk", "wv", "wo"), mats):
            if m.shape != (C, C):
                raise ValueError(f"{name} has shape {m.shape}, expected a square {C}x{C} matrix")
            if not np.all(np.isfinite(m)):
                raise ValueError(f"{name} contains non-finite values")
            setattr(self, name, m)
        if int(self.heads) != self.heads or self.heads < 1 or C % self.heads:
            raise ValueError(f"heads={self.heads} must be a positive divisor of C={C}")
        self.heads = int(self.heads)

    @property
    def channels(self) -> int:
        return self.wq.shape[0]

    @property
    def head_dim(self) -> int:
        return self.channels // self.heads

    @classmethod
    def random(cls, channels, heads=4, rng=None, dtype=np.float32, std=None):
        rng = np.random.default_rng(rng)
        std = 1.0 / np.sqrt(channels) if std is None else std
        mats = [(rng.standard_normal((channels, channels)) * std).astype(dtype) for _ in range(4)]
        return cls(*mats, heads=heads)

    def astype(self, dtype) -> "AttentionWeights":
        return AttentionWeights(*(m.astype(dtype) for m in (self.wq, self.wk, self.wv, self.wo)),
                                heads=self.heads)

    def __eq__(self, other):
        if not isinstance(other, AttentionWeights):
            return NotImplemented
        return self.heads == other.heads and all(
            np.array_equal(getattr(self, n), getattr(other, n)) for n in ("wq", "wk", "wv", "wo"))


def _storage_dtype(*arrays):
    dt = np.result_type(*arrays)
    return dt if np.issubdtype(dt, np.floating) else np.dtype(np.float64)


def linear_project(z, w):
    """Multiply every channel vector (last axis) of ``z`` by ``w``."""
    z = np.asarray(z)
    w = np.asarray(w)
    if w.ndim != 2 or w.shape[1] != z.shape[-1]:
        raise ValueError(f"cannot project channels {z.shape[-1]} with matrix of shape {w.shape}")
    out = z.astype(np.float64) @ w.astype(np.float64).T
    return out.astype(_storage_dtype(z, w))


def _split_heads(x, heads):
    F, N, C = x.shape
    return x.reshape(F, N, heads, C // heads).transpose(1, 2, 0, 3)


def _merge_heads(x):
    N, h, F, d = x.shape
    return x.transpose(2, 0, 1, 3).reshape(F, N, h * d)


def _check_qkv(q, k, v, heads):
    q, k, v = (np.asarray(a) for a in (q, k, v))
    if q.ndim != 3 or q.shape != k.shape or q.shape[:2] != v.shape[:2] or v.shape[2] != q.shape[2]:
        raise ValueError(f"q, k, v must share an (F, N, C) shape, got {q.shape}, {k.shape}, {v.shape}")
    if heads < 1 or q.shape[2] % heads:
        raise ValueError(f"heads={heads} must divide C={q.shape[2]}")
    return q, k, v


def _mask_array(mask, shape, name):
    if mask is None:
        return None
    mask = np.asarray(mask)
    if mask.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {mask.shape}")
    return mask.astype(bool)


def attention_probs(q, k, key_mask=None, heads=1, scale=None):
    """Softmax weights ``(N, heads, F, F)``; row ``i`` attends over frames ``j``.

    Masked keys get zero weight. A query whose keys are all masked gets an
    all-zero row.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    F, N, C = q.shape
    if scale is None:
        scale = 1.0 / np.sqrt(C // heads)
    logits = (_split_heads(q, heads) @ _split_heads(k, heads).swapaxes(-1, -2)) * scale
    if np.isnan(logits).any():
        raise RuntimeError("attention logits contain NaN")
    if key_mask is not None:
        keep = key_mask.T[:, None, None, :]
        logits = np.where(keep, logits, -np.inf)
    peak = logits.max(axis=-1, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    e = np.exp(logits - peak)
    denom = e.sum(axis=-1, keepdims=True)
    return np.divide(e, denom, out=np.zeros_like(e), where=denom > 0)


def frame_attention(q, k, v, key_mask=None, query_mask=None, heads=1, scale=None,
                    return_probs=False):
    """Multi-head softmax attention across the frame axis of ``(F, N, C)`` tensors.

    Each token column attends independently. ``scale`` defaults to
    ``1 / sqrt(C / heads)``. ``key_mask`` and ``query_mask`` are ``(F, N)``;
    masked keys receive no weight and masked queries produce zero rows.
    """
    q, k, v = _check_qkv(q, k, v, heads)
    F, N, C = q.shape
    key_mask = _mask_array(key_mask, (F, N), "key_mask")
    query_mask = _mask_array(query_mask, (F, N), "query_mask")
    probs = attention_probs(q, k, key_mask, heads, scale)
    out = _merge_heads(probs @ _split_heads(v.astype(np.float64), heads))
    if query_mask is not None:
        out = np.where(query_mask[..., None], out, 0.0)
    out = out.astype(_storage_dtype(q, k, v))
    if return_probs:
        return out, probs
    return out


def _attend_block(tokens, w: AttentionWeights, return_probs=False):
    q = linear_project(tokens, w.wq)
    k = linear_project(tokens, w.wk)
    v = linear_project(tokens, w.wv)
    res = frame_attention(q, k, v, heads=w.heads, return_probs=return_probs)
    out, probs = res if return_probs else (res, None)
    out = linear_project(out, w.wo)
    return (out, probs) if return_probs else out


def check_volume(z) -> np.ndarray:
    z = np.asarray(z)
    if z.ndim != 4 or min(z.shape) < 1:
        raise ValueError(f"feature volume must have shape (F, H, W, C), got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("feature volume contains non-finite values")
    return z


def temporal_attention(z, w: AttentionWeights, return_probs=False):
    """Attention along frames at every fixed spatial position of ``z`` ``(F, H, W, C)``."""
    z = check_volume(z)
    F, H, W, C = z.shape
    if C != w.channels:
        raise ValueError(f"volume has {C} channels but weights expect {w.channels}")
    res = _attend_block(z.reshape(F, H * W, C), w, return_probs)
    out, probs = res if return_probs else (res, None)
    out = out.reshape(F, H, W, C)
    return (out, probs) if return_probs else out


def full_spacetime_attention(z, w: AttentionWeights, max_tokens=MAX_SPACETIME_TOKENS):
    """Joint attention over all ``F*H*W`` tokens treated as one sequence."""
    z = check_volume(z)
    F, H, W, C = z.shape
    if C != w.channels:
        raise ValueError(f"volume has {C} channels but weights expect {w.channels}")
    T = F * H * W
    if T > max_tokens:
        raise ValueError(f"{T} tokens exceed the budget of {max_tokens}")
    return _attend_block(z.reshape(T, 1, C), w).reshape(F, H, W, C)


def init_branch_from_temporal(w_temporal: AttentionWeights) -> AttentionWeights:
    """Branch weights inheriting Q/K/V from temporal attention with a zero output projector."""
    return AttentionWeights(w_temporal.wq.copy(), w_temporal.wk.copy(), w_temporal.wv.copy(),
                            np.zeros_like(w_temporal.wo), heads=w_temporal.heads)


class AttentionProfile(NamedTuple):
    by_offset: np.ndarray
    mean_map: np.ndarray
    normalized_map: np.ndarray


def attention_stats(attn, atol=1e-5) -> AttentionProfile:
    """Summarise softmax maps of shape ``(..., F, F)`` (rows over the second-last axis).

    ``by_offset[d]`` is the mean weight between frames ``|i - j| = d`` in the
    averaged map. ``normalized_map`` is the averaged map min-max scaled to
    ``[0, 1]``; a constant map scales to all zeros.
    """
    attn = np.asarray(attn, dtype=np.float64)
    if attn.ndim < 2 or attn.shape[-1] != attn.shape[-2]:
        raise ValueError(f"expected (..., F, F) attention maps, got {attn.shape}")
    F = attn.shape[-1]
    if np.any(np.abs(attn.sum(axis=-1) - 1.0) > atol) or np.any(attn < 0):
        raise ValueError("attention rows must be non-negative and sum to 1")
    mean_map = attn.reshape(-1, F, F).mean(axis=0)
    i, j = np.indices((F, F))
    offset = np.abs(i - j)
    by_offset = np.array([mean_map[offset == d].mean() for d in range(F)])
    lo, hi = mean_map.min(), mean_map.max()
    normalized = (mean_map - lo) / (hi - lo) if hi > lo else np.zeros_like(mean_map)
    return AttentionProfile(by_offset, mean_map, normalized)
