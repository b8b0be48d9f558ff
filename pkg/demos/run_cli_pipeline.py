"""
End-to-end through the command line
===================================

Write input files, extract trajectories, run fused attention and score poses,
all via the ``trajattn`` subcommands.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from trajattn import attnkernel as ak
from trajattn import io as tio
from trajattn.geomcore import Extrinsics
from trajattn.synthoracle import CAMERA_PATHS, drift_pair, make_scene


def cli(*args):
    proc = subprocess.run([sys.executable, "-m", "trajattn", *map(str, args)], capture_output=True, text=True)
    print("$ trajattn", " ".join(map(str, args[:2])), "...", f"-> exit {proc.returncode}")
    text = proc.stdout.strip() or proc.stderr.strip()
    print("  ", text if len(text) < 160 else text[:150] + " ...")
    return proc


tmp = Path(tempfile.mkdtemp())
scene = make_scene(0, 64, 64, 1)
poses = CAMERA_PATHS["orbit"](8)
tio.write_depth(tmp / "depth.tadm", scene.depth)
tio.write_poses(tmp / "poses.json", scene.intrinsics, poses)
cli("extract-image", "--depth", tmp / "depth.tadm", "--poses", tmp / "poses.json", "--out", tmp / "traj.tatr")

rng = np.random.default_rng(0)
tio.write_features(tmp / "latent.tafv", rng.standard_normal((8, 8, 8, 16)).astype(np.float32))
tio.write_weights(tmp / "w.taaw", ak.AttentionWeights.random(16, 4, rng))
common = ["--features", tmp / "latent.tafv", "--trajectories", tmp / "traj.tatr", "--weights", tmp / "w.taaw"]
cli("attend", *common, "--mode", "temporal", "--out", tmp / "temporal.tafv")
cli("attend", *common, "--mode", "fused", "--out", tmp / "fused.tafv")
same = (tmp / "temporal.tafv").read_bytes() == (tmp / "fused.tafv").read_bytes()
print("   zero-initialised fused output identical to temporal:", same)

# Pose files hold world-to-camera extrinsics.
gt = np.stack([p.inverse().matrix for p in poses])
est = [Extrinsics.from_matrix(m).inverse() for m in drift_pair(gt, 1.0)]
tio.write_poses(tmp / "est.json", scene.intrinsics, est)
cli("metrics", "--est", tmp / "est.json", "--gt", tmp / "poses.json")

# A truncated file is a format error (exit 3) naming the byte counts.
(tmp / "bad.tadm").write_bytes((tmp / "depth.tadm").read_bytes()[:100])
cli("extract-image", "--depth", tmp / "bad.tadm", "--poses", tmp / "poses.json", "--out", tmp / "x.tatr")

report = json.loads(cli("selftest").stdout)
print("   selftest checks:", len(report["checks"]), "all passed:", report["passed"])
