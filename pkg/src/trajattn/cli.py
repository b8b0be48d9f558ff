"""Command-line entry point.

Every command prints one JSON line on stdout. Exit codes: 0 success,
1 invariant failure, 2 invalid argument, 3 I/O or format error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import attnkernel as ak
from . import evalmetrics as em
from . import io as tio
from . import trajgen as tg
from .config import load_config, parse_scale

EXIT_OK, EXIT_INVARIANT, EXIT_INVALID, EXIT_IO = 0, 1, 2, 3

MODES = ("temporal", "branch", "fused", "spacetime")


def cmd_extract_image(depth_path, pose_path, out_path) -> dict:
    depth = tio.read_depth(depth_path)
    k, poses = tio.read_poses(pose_path)
    ts = tg.extract_from_image(depth, k, poses)
    tio.write_trajectories(out_path, ts)
    return {"L": ts.count, "F": ts.frames, "valid_fraction": ts.valid_fraction}


def cmd_extract_video(tracks_path, depth_dir, pose_path, out_path) -> dict:
    tracks = tio.read_tracks(tracks_path)
    k, poses = tio.read_poses(pose_path)
    if tracks.frames != len(poses):
        raise ValueError(f"tracks have F={tracks.frames} frames but the pose file has F={len(poses)}")
    depths = tio.read_depth_dir(depth_dir)
    ts = tg.extract_from_video(tracks, depths, k, poses)
    tio.write_trajectories(out_path, ts)
    return {"L": ts.count, "F": ts.frames, "valid_fraction": ts.valid_fraction}


def cmd_attend(features_path, traj_path, weights_path, mode, out_path, branch_weights_path=None,
               config=None) -> dict:
    """Run one attention operator over a feature file and write the result.

    ``branch`` uses ``branch_weights_path`` when given, else ``weights_path``.
    ``fused`` and ``spacetime`` add the trajectory branch with
    ``branch_weights_path`` or, failing that, zero-initialised branch weights
    inherited from ``weights_path``; ``spacetime`` without trajectories is the
    plain 3D attention.
    """
    cfg = config or load_config()
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {', '.join(MODES)}")
    z = tio.read_features(features_path).astype(cfg.dtype)
    w = tio.read_weights(weights_path).astype(cfg.dtype)
    wb = tio.read_weights(branch_weights_path).astype(cfg.dtype) if branch_weights_path else None
    if z.shape[3] != w.channels:
        raise ValueError(f"features have C={z.shape[3]} channels, weights expect C={w.channels}")
    ts = None
    if traj_path is not None:
        ts = tg.rescale_to_latent(tio.read_trajectories(traj_path), cfg.latent_scale,
                                  latent_size=z.shape[1:3])
        if ts.frames != z.shape[0]:
            raise ValueError(f"trajectories have F={ts.frames} frames, features have F={z.shape[0]}")
    elif mode in ("branch", "fused"):
        raise ValueError(f"mode {mode!r} needs a trajectory file")

    if mode == "temporal":
        out = ak.temporal_attention(z, w)
    elif mode == "branch":
        out = ak.trajectory_branch(z, ts, wb if wb is not None else w)
    else:
        base = ak.temporal_attention(z, w) if mode == "fused" else ak.full_spacetime_attention(z, w)
        if ts is None:
            out = base
        else:
            branch_w = wb if wb is not None else ak.init_branch_from_temporal(w)
            out = ak.fuse(base, ak.trajectory_branch(z, ts, branch_w))
    tio.write_features(out_path, out)
    return {"mode": mode, "shape": list(out.shape),
            "trajectories": None if ts is None else ts.count,
            "valid_fraction": None if ts is None else ts.valid_fraction}


def _camera_to_world(poses):
    return np.stack([p.inverse().matrix for p in poses])


def cmd_metrics(est_pose_path, gt_pose_path, delta=1) -> dict:
    """ATE/RPE between two pose files; frames hold world-to-camera extrinsics."""
    _, est = tio.read_poses(est_pose_path)
    _, gt = tio.read_poses(gt_pose_path)
    return em.evaluate(_camera_to_world(est), _camera_to_world(gt), delta)


def cmd_selftest(seed=0, weights_path=None) -> dict:
    from .selftest import run_selftest

    weights = None
    if weights_path is not None:
        try:
            weights = tio.read_weights(weights_path)
        except (ValueError, OSError) as exc:
            return {"seed": seed, "passed": False,
                    "checks": [{"name": "weights_fixture", "passed": False,
                                "value": str(exc), "limit": None}]}
    return run_selftest(seed, weights)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajattn", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with RunConfig fields")
    parser.add_argument("--precision", choices=["f32", "f64"])
    parser.add_argument("--latent-scale", type=parse_scale)
    parser.add_argument("--seed", type=int)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-image", help="trajectories from one depth map and a camera path")
    p.add_argument("--depth", required=True)
    p.add_argument("--poses", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("extract-video", help="trajectories from point tracks, per-frame depth and a camera path")
    p.add_argument("--tracks", required=True)
    p.add_argument("--depth-dir", required=True)
    p.add_argument("--poses", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("attend", help="apply an attention operator to a feature volume")
    p.add_argument("--features", required=True)
    p.add_argument("--trajectories")
    p.add_argument("--weights", required=True)
    p.add_argument("--branch-weights")
    p.add_argument("--mode", choices=MODES, default="fused")
    p.add_argument("--out", required=True)

    p = sub.add_parser("metrics", help="ATE and RPE between estimated and ground-truth poses")
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--delta", type=int)

    p = sub.add_parser("selftest", help="run the invariant suite")
    p.add_argument("--weights", help="weights file to use in the attention checks")
    return parser


def _dispatch(args, cfg):
    if args.command == "extract-image":
        return cmd_extract_image(args.depth, args.poses, args.out), EXIT_OK
    if args.command == "extract-video":
        return cmd_extract_video(args.tracks, args.depth_dir, args.poses, args.out), EXIT_OK
    if args.command == "attend":
        return cmd_attend(args.features, args.trajectories, args.weights, args.mode, args.out,
                          args.branch_weights, cfg), EXIT_OK
    if args.command == "metrics":
        return cmd_metrics(args.est, args.gt, cfg.rpe_delta), EXIT_OK
    report = cmd_selftest(cfg.seed, args.weights)
    for row in report["checks"]:
        if not row["passed"]:
            print(f"FAILED {row['name']}: {row['value']} (limit {row['limit']})", file=sys.stderr)
    return report, EXIT_OK if report["passed"] else EXIT_INVARIANT


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, precision=args.precision, latent_scale=args.latent_scale,
                          seed=args.seed, rpe_delta=getattr(args, "delta", None))
        threads = os.environ.get("TA_THREADS")
        limiter = None
        if threads:
            from threadpoolctl import threadpool_limits
            limiter = threadpool_limits(limits=int(threads))
        try:
            result, code = _dispatch(args, cfg)
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps(result, separators=(",", ":")))
    return code


if __name__ == "__main__":
    sys.exit(main())
