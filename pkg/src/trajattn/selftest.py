"""Invariant suite behind ``trajattn selftest``.

Each check yields ``(name, passed, value, limit)`` rows. The report holds no
timings, so two runs with the same seed produce identical output.
"""
from __future__ import annotations

import os
import tempfile

import numpy as np

from . import attnkernel as ak
from . import evalmetrics as em
from . import geomcore as gc
from . import io as tio
from . import trajgen as tg
from .synthoracle import (CAMERA_PATHS, apply_global, brute_force_reference, check_gradients,
                          check_trajectory_constancy, drift_pair, make_scene, quantization_bound,
                          random_extrinsics, random_pose_path, random_trajectories, render_sequence,
                          shuffle_trajectories, warp_compression)

GRAD_TOL = 1e-6
F32_TOL = 1e-5
F64_TOL = 1e-10


def _rel(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-30)) if a.size else 0.0


def _random_case(rng, max_f=4, max_hw=6, max_c=8, dtype=np.float32):
    F = int(rng.integers(1, max_f + 1))
    H = int(rng.integers(1, max_hw + 1))
    W = int(rng.integers(1, max_hw + 1))
    heads = int(rng.choice([1, 2, 4]))
    C = heads * int(rng.integers(1, max_c // heads + 1))
    z = rng.standard_normal((F, H, W, C)).astype(dtype)
    ts = random_trajectories(rng, F, H, W, count=int(rng.integers(1, 2 * H * W + 1)))
    w = ak.AttentionWeights.random(C, heads, rng, dtype=dtype)
    return z, ts, w


def check_zero_init(rng, weights=None):
    bad = 0
    for _ in range(20):
        z, ts, w = _random_case(rng)
        if weights is not None:
            w = weights
            z = rng.standard_normal(z.shape[:3] + (w.channels,)).astype(np.float32)
        base = ak.temporal_attention(z, w)
        fused = ak.fuse(base, ak.trajectory_branch(z, ts, ak.init_branch_from_temporal(w)))
        bad += base.tobytes() != fused.tobytes()
    yield "zero_init_identity", bad == 0, bad, 0


def check_adjoint(rng):
    bad = 0
    for _ in range(20):
        shape = tuple(int(x) for x in rng.integers(1, [5, 9, 9, 9]))
        z = rng.standard_normal(shape).astype(np.float32)
        ts = tg.identity_trajectories(*shape[:3])
        bp = ak.back_project(ak.sample_along_trajectories(z, ts), ts, shape[1:3])
        bad += not (np.array_equal(bp.values, z) and np.all(bp.counts == 1))
    yield "adjoint_round_trip", bad == 0, bad, 0


def check_oracles(rng):
    worst = {"sample": 0, "back_project_f64": 0.0, "back_project_f32": 0.0,
             "frame_attention_f32": 0.0, "frame_attention_f64": 0.0, "pixel_translation": 0.0}
    for _ in range(100):
        z, ts, _ = _random_case(rng, dtype=np.float64)
        H, W = z.shape[1:3]
        got = ak.sample_along_trajectories(z, ts).data
        ref = brute_force_reference("sample_along_trajectories", {"z": z, "coords": ts.coords, "mask": ts.mask})
        worst["sample"] += not np.array_equal(got, ref)

        data = rng.standard_normal((ts.frames, ts.count, z.shape[3]))
        bp = ak.back_project(data, ts, (H, W))
        rv, rc = brute_force_reference("back_project", {"data": data, "coords": ts.coords,
                                                        "mask": ts.mask, "grid_size": (H, W)})
        err = _rel(bp.values, rv) if np.array_equal(bp.counts, rc) else np.inf
        worst["back_project_f64"] = max(worst["back_project_f64"], err)
        d32 = data.astype(np.float32)
        bp32 = ak.back_project(d32, ts, (H, W))
        rv32, _ = brute_force_reference("back_project", {"data": d32, "coords": ts.coords,
                                                         "mask": ts.mask, "grid_size": (H, W)})
        worst["back_project_f32"] = max(worst["back_project_f32"], _rel(bp32.values, rv32))

        F, N = ts.frames, int(rng.integers(1, 7))
        heads = int(rng.choice([1, 2]))
        C = heads * int(rng.integers(1, 4))
        q, k, v = (rng.standard_normal((F, N, C)) for _ in range(3))
        km = rng.random((F, N)) < 0.8
        for dt, key in ((np.float64, "frame_attention_f64"), (np.float32, "frame_attention_f32")):
            qq, kk, vv = (a.astype(dt) for a in (q, k, v))
            got = ak.frame_attention(qq, kk, vv, key_mask=km, heads=heads)
            ref = brute_force_reference("frame_attention", {"q": qq, "k": kk, "v": vv,
                                                            "key_mask": km, "heads": heads})
            worst[key] = max(worst[key], _rel(got, ref))

        h, w = (int(x) for x in rng.integers(2, 9, 2))
        depth = rng.uniform(1.0, 3.0, (h, w))
        k_ = gc.make_default_intrinsics(w, h, rng.uniform(5, 300))
        e1, e2 = random_extrinsics(rng, 0.2), random_extrinsics(rng, 0.2)
        fld, val = gc.pixel_translation(depth, k_, e1, e2)
        rf, rvl = brute_force_reference("pixel_translation", {"depth": depth, "k": k_, "e1": e1, "e2": e2})
        # relative error of the reprojected positions
        grid = gc.pixel_grid(h, w)
        err = _rel((fld + grid)[val], (rf + grid)[val])
        if not np.array_equal(val, rvl):
            err = np.inf
        worst["pixel_translation"] = max(worst["pixel_translation"], err)

    yield "oracle_sample_exact", worst["sample"] == 0, worst["sample"], 0
    yield "oracle_back_project_f64", worst["back_project_f64"] <= F64_TOL, worst["back_project_f64"], F64_TOL
    yield "oracle_back_project_f32", worst["back_project_f32"] <= F32_TOL, worst["back_project_f32"], F32_TOL
    yield "oracle_frame_attention_f32", worst["frame_attention_f32"] <= F32_TOL, worst["frame_attention_f32"], F32_TOL
    yield "oracle_frame_attention_f64", worst["frame_attention_f64"] <= F64_TOL, worst["frame_attention_f64"], F64_TOL
    yield "oracle_pixel_translation_f64", worst["pixel_translation"] <= F64_TOL, worst["pixel_translation"], F64_TOL


def check_grads(seed):
    for name, err in check_gradients(seed).items():
        yield f"gradient_{name}", err <= GRAD_TOL, err, GRAD_TOL


def lateral_shift_error(focal=260.0, depth=2.0, tx=0.5, size=16):
    k = gc.make_default_intrinsics(size, size, focal)
    field, valid = gc.pixel_translation(np.full((size, size), depth), k, gc.Extrinsics.identity(),
                                        gc.Extrinsics(np.eye(3), [tx, 0.0, 0.0]))
    expected = focal * abs(tx) / depth
    return max(float(np.abs(np.abs(field[..., 0]) - expected).max()),
               float(np.abs(field[..., 1]).max())) if valid.all() else np.inf


def zoom_law_error(focal=260.0, depth=2.0, tz=0.5, size=16):
    k = gc.make_default_intrinsics(size, size, focal)
    # moving the camera forward by tz brings points tz closer
    field, valid = gc.pixel_translation(np.full((size, size), depth), k, gc.Extrinsics.identity(),
                                        gc.Extrinsics(np.eye(3), [0.0, 0.0, -tz]))
    grid = gc.pixel_grid(size, size).astype(np.float64)
    offset = grid - [k.cx, k.cy]
    expected = offset * depth / (depth - tz) - offset
    return float(np.abs(field - expected).max()) if valid.all() else np.inf


def check_geometry():
    err = lateral_shift_error()
    yield "geometry_lateral_65px", err <= 1e-4, err, 1e-4
    err = zoom_law_error()
    yield "geometry_zoom_law", err <= 1e-4, err, 1e-4


def constancy_case(path, seed, size=64, frames=12, channels=3):
    scene = make_scene(seed, size, size, channels)
    poses = CAMERA_PATHS[path](frames)
    volume = render_sequence(scene, poses)
    ts = tg.extract_from_image(scene.depth, scene.intrinsics, poses)
    bound = quantization_bound(scene.texture, warp_compression(ts))
    dev = check_trajectory_constancy(volume, ts)
    shuffled = check_trajectory_constancy(volume, shuffle_trajectories(ts, seed))
    return dev, shuffled, bound


def check_constancy(seed):
    for path in CAMERA_PATHS:
        dev, shuffled, bound = constancy_case(path, seed)
        yield f"constancy_{path}", dev <= bound, dev, bound
        yield f"negative_control_{path}", shuffled >= 10 * bound, shuffled, 10 * bound


def check_metrics(rng):
    gt = random_pose_path(rng, 10)
    v = em.ate(gt, gt)
    yield "ate_self_zero", v <= 1e-12, v, 1e-12
    moved = apply_global(gt, random_extrinsics(rng))
    v = em.ate(moved, gt)
    yield "ate_global_transform", v <= 1e-9, v, 1e-9
    r = em.rpe(drift_pair(gt, 1.0), gt)
    v = abs(r.rot_deg - 1.0)
    yield "rpe_drift_1deg", v <= 1e-6, v, 1e-6
    T0 = random_extrinsics(rng)
    T, s = em.rigid_align(apply_global(gt, T0), gt)
    centers = apply_global(gt, T0)[:, :3, 3]
    v = float(np.abs(s * centers @ T.rotation.T + T.translation - gt[:, :3, 3]).max())
    yield "rigid_align_recovery", v <= 1e-9, v, 1e-9


def check_attention(rng, weights=None):
    z, ts, w = _random_case(rng)
    if weights is not None:
        w = weights
        z = rng.standard_normal(z.shape[:3] + (w.channels,)).astype(np.float32)
    _, probs = ak.temporal_attention(z, w, return_probs=True)
    v = float(np.abs(probs.sum(-1) - 1).max())
    yield "softmax_rows_normalized", v <= 1e-5, v, 1e-5

    # perturb features at masked trajectory entries; output must not move
    F, H, W, C = 4, 5, 5, w.channels
    z = rng.standard_normal((F, H, W, C)).astype(np.float32)
    ts = tg.TrajectorySet(*_disjoint_trajectories(rng, F, H, W))
    base = ak.trajectory_branch(z, ts, w)
    zp = z.copy()
    fi, li = np.nonzero(~ts.mask)
    cells = ts.coords[li, fi].astype(np.int64)
    zp[fi, cells[:, 1], cells[:, 0]] += 100.0
    ok = np.array_equal(base, ak.trajectory_branch(zp, ts, w))
    yield "masked_keys_non_influential", ok, int(not ok), 0

    Fm = 6
    uni = ak.attention_stats(np.full((3, Fm, Fm), 1.0 / Fm))
    diag = ak.attention_stats(np.broadcast_to(np.eye(Fm), (3, Fm, Fm)))
    v = max(float(np.abs(uni.by_offset - 1.0 / Fm).max()),
            float(np.abs(diag.by_offset - np.eye(Fm)[0]).max()))
    yield "attention_stats_profiles", v <= 1e-12, v, 1e-12


def _disjoint_trajectories(rng, F, H, W):
    # each trajectory owns its cell in every frame so masked cells are not shared
    L = H * W
    coords = np.empty((L, F, 2))
    for f in range(F):
        perm = rng.permutation(L)
        coords[:, f, 0] = perm % W
        coords[:, f, 1] = perm // W
    mask = rng.random((F, L)) < 0.7
    return coords, mask


def check_formats(rng):
    bad = []
    with tempfile.TemporaryDirectory() as tmp:
        p = lambda n: os.path.join(tmp, n)
        depth = rng.uniform(1, 3, (5, 7)).astype(np.float32)
        tio.write_depth(p("d"), depth)
        if not np.array_equal(tio.read_depth(p("d")), depth):
            bad.append("depth")
        vol = rng.standard_normal((2, 3, 4, 5)).astype(np.float32)
        tio.write_features(p("v"), vol)
        if not np.array_equal(tio.read_features(p("v")), vol):
            bad.append("features")
        w = ak.AttentionWeights.random(8, 2, rng)
        tio.write_weights(p("w"), w)
        if tio.read_weights(p("w")) != w:
            bad.append("weights")
        xy = rng.uniform(0, 10, (3, 4, 2)).astype(np.float32).astype(np.float64)
        tr = tg.PointTracks(xy, rng.random((3, 4)) < 0.5)
        tio.write_tracks(p("t"), tr)
        back = tio.read_tracks(p("t"))
        if not (np.array_equal(back.positions, tr.positions) and np.array_equal(back.visible, tr.visible)):
            bad.append("tracks")
        ts = tg.TrajectorySet(xy.transpose(1, 0, 2), rng.random((3, 4)) < 0.5)
        tio.write_trajectories(p("r"), ts)
        if tio.read_trajectories(p("r")) != ts:
            bad.append("trajectories")
        k = gc.make_default_intrinsics(64, 48, 260)
        poses = [random_extrinsics(rng) for _ in range(3)]
        tio.write_poses(p("j"), k, poses)
        k2, poses2 = tio.read_poses(p("j"))
        if k2 != k or poses2 != poses:
            bad.append("poses")
    yield "formats_round_trip", not bad, ",".join(bad) or "ok", "ok"


def run_selftest(seed=0, weights=None) -> dict:
    """Run every check; ``weights`` (an ``AttentionWeights``) replaces random weights in the attention checks."""
    rng = np.random.default_rng(seed)
    groups = [
        ("zero_init", lambda: check_zero_init(rng, weights)),
        ("adjoint", lambda: check_adjoint(rng)),
        ("oracles", lambda: check_oracles(rng)),
        ("gradients", lambda: check_grads(seed)),
        ("geometry", check_geometry),
        ("constancy", lambda: check_constancy(seed)),
        ("metrics", lambda: check_metrics(rng)),
        ("attention", lambda: check_attention(rng, weights)),
        ("formats", lambda: check_formats(rng)),
    ]
    rows = []
    for group_name, group in groups:
        try:
            for name, passed, value, limit in group():
                rows.append({"name": name, "passed": bool(passed), "value": _jsonable(value),
                             "limit": _jsonable(limit)})
        except Exception as exc:  # a crashing check is a failing check
            rows.append({"name": group_name, "passed": False,
                         "value": f"{type(exc).__name__}: {exc}", "limit": None})
    return {"seed": seed, "passed": all(r["passed"] for r in rows), "checks": rows}


def _jsonable(x):
    if isinstance(x, (np.floating, float)):
        return float(x) if np.isfinite(x) else str(x)
    if isinstance(x, (np.integer, np.bool_)):
        return x.item()
    return x
