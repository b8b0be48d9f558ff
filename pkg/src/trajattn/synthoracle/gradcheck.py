"""Central finite-difference checks for the analytic backward passes."""
from __future__ import annotations

import numpy as np

from .. import attnkernel as ak
from ..trajgen import TrajectorySet

STEP = 1e-3


def numerical_gradient(f, x, h=STEP):
    """Central differences of scalar ``f`` w.r.t. every element of float64 array ``x`` (modified in place, then restored)."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return grad


def richardson_gradient(f, x, h=STEP):
    """Fourth-order estimate from central differences at ``h`` and ``h / 2``."""
    coarse = numerical_gradient(f, x, h)
    fine = numerical_gradient(f, x, h / 2)
    return (4.0 * fine - coarse) / 3.0


def relative_error(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / scale)


def random_trajectories(rng, frames, height, width, count, valid_p=0.8):
    """Random in-bounds trajectories kept clear of rounding boundaries."""
    cells = np.stack([rng.integers(0, width, (count, frames)),
                      rng.integers(0, height, (count, frames))], axis=-1)
    coords = cells + rng.uniform(-0.4, 0.4, cells.shape)
    coords = np.clip(coords, 0.0, [width - 0.6, height - 0.6])
    mask = rng.random((frames, count)) < valid_p
    return TrajectorySet(coords, mask, size=(height, width))


def check_gradients(seed=0, shape=(2, 3, 3, 4), heads=2, h=STEP):
    """Relative analytic-vs-numeric error for every differentiable op, keyed by name.

    Primitive ops use plain central differences. The composite attention
    blocks are cubic in their inputs, so their second-order truncation error
    alone is around 1e-6 at ``h = 1e-3``; they are checked against a
    Richardson-extrapolated difference instead.
    """
    rng = np.random.default_rng(seed)
    F, H, W, C = shape
    N = H * W
    results = {}

    def run(name, forward, params, analytic, numeric=numerical_gradient):
        proj = rng.standard_normal(np.shape(forward()))
        loss = lambda: float(np.sum(np.asarray(forward(), dtype=np.float64) * proj))
        grads = analytic(proj)
        results[name] = max(relative_error(g, numeric(loss, p, h)) for p, g in zip(params, grads))

    z = rng.standard_normal((F, N, C))
    w = rng.standard_normal((C, C))
    run("linear_project", lambda: ak.linear_project(z, w), [z, w],
        lambda g: ak.linear_project_backward(z, w, g))

    q, k, v = (rng.standard_normal((F, N, C)) for _ in range(3))
    km = rng.random((F, N)) < 0.8
    run("frame_attention",
        lambda: ak.frame_attention(q, k, v, key_mask=km, query_mask=km, heads=heads),
        [q, k, v], lambda g: ak.frame_attention_backward(q, k, v, g, km, km, heads=heads))

    vol = rng.standard_normal(shape)
    ts = random_trajectories(rng, F, H, W, count=2 * N)
    run("sample_along_trajectories", lambda: ak.sample_along_trajectories(vol, ts).data, [vol],
        lambda g: [ak.sample_backward(g, ts, shape)])

    data = rng.standard_normal((F, ts.count, C))
    run("back_project", lambda: ak.back_project(data, ts, (H, W)).values, [data],
        lambda g: [ak.back_project_backward(g, ts)])

    a, b = rng.standard_normal(shape), rng.standard_normal(shape)
    run("fuse", lambda: ak.fuse(a, b), [a, b], lambda g: ak.fuse_backward(g))

    x0, noise, pred = (rng.standard_normal(shape) for _ in range(3))
    batch = ak.DenoisingBatch(x0, noise, sigma=1.0)
    run("denoising_loss", lambda: ak.denoising_loss(pred, batch), [pred],
        lambda g: [g * ak.denoising_loss_backward(pred, batch)])

    wts = ak.AttentionWeights(*(rng.standard_normal((C, C)) / np.sqrt(C) for _ in range(4)), heads=heads)
    mats = [wts.wq, wts.wk, wts.wv, wts.wo]
    run("temporal_attention", lambda: ak.temporal_attention(vol, wts), [vol] + mats,
        lambda g: (lambda r: [r[0], *r[1]])(ak.temporal_attention_backward(vol, wts, g)),
        numeric=richardson_gradient)

    run("trajectory_branch", lambda: ak.trajectory_branch(vol, ts, wts), [vol] + mats,
        lambda g: (lambda r: [r[0], *r[1]])(ak.trajectory_branch_backward(vol, ts, wts, g)),
        numeric=richardson_gradient)
    return results
