"""Analytic backward passes for the attention kernels.

Every function takes the forward inputs plus the upstream gradient and
returns gradients in float64. Composite backward passes for the temporal
block and the trajectory branch are built from the primitive ones.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..trajgen import TrajectorySet
from .attention import (AttentionWeights, _merge_heads, _split_heads, attention_probs,
                        frame_attention, linear_project)
from .loss import DenoisingBatch
from .trajectory import sample_along_trajectories, trajectory_cells


class WeightGrads(NamedTuple):
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray


def linear_project_backward(z, w, grad_out):
    """Gradients of ``y = w @ x`` (per channel vector) w.r.t. ``z`` and ``w``."""
    z = np.asarray(z, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    g = np.asarray(grad_out, dtype=np.float64)
    grad_z = g @ w
    grad_w = g.reshape(-1, g.shape[-1]).T @ z.reshape(-1, z.shape[-1])
    return grad_z, grad_w


def frame_attention_backward(q, k, v, grad_out, key_mask=None, query_mask=None, heads=1, scale=None):
    """Gradients of :func:`frame_attention` w.r.t. ``q``, ``k`` and ``v``."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    g = np.asarray(grad_out, dtype=np.float64)
    F, N, C = q.shape
    if scale is None:
        scale = 1.0 / np.sqrt(C // heads)
    if key_mask is not None:
        key_mask = np.asarray(key_mask, dtype=bool)
    if query_mask is not None:
        g = np.where(np.asarray(query_mask, dtype=bool)[..., None], g, 0.0)
    P = attention_probs(q, k, key_mask, heads, scale)
    gh = _split_heads(g, heads)
    qh, kh, vh = (_split_heads(a, heads) for a in (q, k, v))
    grad_v = P.swapaxes(-1, -2) @ gh
    grad_p = gh @ vh.swapaxes(-1, -2)
    grad_s = P * (grad_p - (grad_p * P).sum(axis=-1, keepdims=True))
    grad_q = (grad_s @ kh) * scale
    grad_k = (grad_s.swapaxes(-1, -2) @ qh) * scale
    return _merge_heads(grad_q), _merge_heads(grad_k), _merge_heads(grad_v)


def sample_backward(grad_data, ts: TrajectorySet, volume_shape):
    """Adjoint of sampling: scatter-add trajectory gradients onto the grid."""
    F, H, W, C = volume_shape
    g = np.asarray(grad_data, dtype=np.float64)
    ix, iy = trajectory_cells(ts, H, W)
    flat = ((np.arange(F)[:, None] * H + iy) * W + ix)[ts.mask]
    out = np.zeros((F * H * W, C))
    np.add.at(out, flat, g[ts.mask])
    return out.reshape(F, H, W, C)


def back_project_backward(grad_values, ts: TrajectorySet):
    """Gradient of the back-projected values w.r.t. the trajectory features (gather, then divide by count)."""
    g = np.asarray(grad_values, dtype=np.float64)
    F, H, W, C = g.shape
    ix, iy = trajectory_cells(ts, H, W)
    counts = np.zeros((F, H, W), dtype=np.int64)
    np.add.at(counts, (np.nonzero(ts.mask)[0], iy[ts.mask], ix[ts.mask]), 1)
    fi = np.arange(F)[:, None]
    c = np.maximum(counts[fi, iy, ix], 1)
    out = g[fi, iy, ix] / c[..., None]
    return np.where(ts.mask[..., None], out, 0.0)


def fuse_backward(grad_out):
    g = np.asarray(grad_out, dtype=np.float64)
    return g, g.copy()


def denoising_loss_backward(pred, batch: DenoisingBatch):
    pred = np.asarray(pred, dtype=np.float64)
    return 2.0 * (pred - batch.x0.astype(np.float64)) / pred.size


def _block_backward(tokens, w: AttentionWeights, grad_out, key_mask=None, query_mask=None):
    tokens = np.asarray(tokens, dtype=np.float64)
    w64 = w.astype(np.float64)
    q = linear_project(tokens, w64.wq)
    k = linear_project(tokens, w64.wk)
    v = linear_project(tokens, w64.wv)
    o = frame_attention(q, k, v, key_mask=key_mask, query_mask=query_mask, heads=w.heads)
    grad_o, grad_wo = linear_project_backward(o, w64.wo, grad_out)
    gq, gk, gv = frame_attention_backward(q, k, v, grad_o, key_mask, query_mask, heads=w.heads)
    grad_tokens = np.zeros_like(tokens)
    grads = []
    for g, m in ((gq, w64.wq), (gk, w64.wk), (gv, w64.wv)):
        gt, gm = linear_project_backward(tokens, m, g)
        grad_tokens += gt
        grads.append(gm)
    return grad_tokens, WeightGrads(*grads, grad_wo)


def temporal_attention_backward(z, w: AttentionWeights, grad_out):
    """Gradients of :func:`temporal_attention` w.r.t. ``z`` and the weights."""
    z = np.asarray(z)
    F, H, W, C = z.shape
    g = np.asarray(grad_out, dtype=np.float64).reshape(F, H * W, C)
    grad_tokens, wg = _block_backward(z.reshape(F, H * W, C), w, g)
    return grad_tokens.reshape(F, H, W, C), wg


def trajectory_branch_backward(z, ts: TrajectorySet, w: AttentionWeights, grad_out):
    """Gradients of :func:`trajectory_branch` w.r.t. ``z`` and the branch weights."""
    z = np.asarray(z, dtype=np.float64)
    tf = sample_along_trajectories(z, ts)
    grad_y = back_project_backward(grad_out, ts)
    grad_data, wg = _block_backward(tf.data, w, grad_y, key_mask=tf.mask, query_mask=tf.mask)
    return sample_backward(grad_data, ts, z.shape), wg

