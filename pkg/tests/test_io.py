import numpy as np
import pytest

from trajattn import attnkernel as ak
from trajattn import geomcore as gc
from trajattn import io as tio
from trajattn import trajgen as tg
from trajattn.synthoracle import random_extrinsics


def test_depth_round_trip(tmp_path, rng):
    d = rng.uniform(0.5, 4, (3, 5)).astype(np.float32)
    tio.write_depth(tmp_path / "d.tadm", d)
    assert tio.read_depth(tmp_path / "d.tadm").tobytes() == d.tobytes()


def test_features_layout_is_little_endian_frame_major(tmp_path):
    v = np.arange(2 * 1 * 2 * 3, dtype=np.float32).reshape(2, 1, 2, 3)
    tio.write_features(tmp_path / "v", v)
    raw = (tmp_path / "v").read_bytes()
    assert raw[:4] == b"TAFV"
    assert np.array_equal(np.frombuffer(raw[4:20], "<u4"), [2, 1, 2, 3])
    assert np.array_equal(np.frombuffer(raw[20:], "<f4"), v.ravel())
    assert np.array_equal(tio.read_features(tmp_path / "v"), v)


def test_weights_layout(tmp_path, rng):
    w = ak.AttentionWeights.random(4, 2, rng)
    tio.write_weights(tmp_path / "w", w)
    raw = (tmp_path / "w").read_bytes()
    assert raw[:4] == b"TAAW" and np.array_equal(np.frombuffer(raw[4:12], "<u4"), [4, 2])
    assert np.array_equal(np.frombuffer(raw[12:12 + 64], "<f4").reshape(4, 4), w.wq)
    assert tio.read_weights(tmp_path / "w") == w


def test_tracks_and_trajectories_round_trip(tmp_path, rng):
    xy = rng.uniform(0, 9, (4, 3, 2)).astype(np.float32).astype(np.float64)
    tr = tg.PointTracks(xy, rng.random((4, 3)) < 0.5)
    tio.write_tracks(tmp_path / "t", tr)
    back = tio.read_tracks(tmp_path / "t")
    assert np.array_equal(back.positions, tr.positions) and np.array_equal(back.visible, tr.visible)
    ts = tg.TrajectorySet(xy.transpose(1, 0, 2), rng.random((4, 3)) < 0.5)
    tio.write_trajectories(tmp_path / "r", ts)
    assert tio.read_trajectories(tmp_path / "r") == ts
    assert (tmp_path / "r").stat().st_size == 12 + 9 * 12


def test_poses_round_trip(tmp_path, rng):
    k = gc.make_default_intrinsics(32, 24, 260)
    poses = [random_extrinsics(rng) for _ in range(4)]
    tio.write_poses(tmp_path / "p.json", k, poses)
    k2, p2 = tio.read_poses(tmp_path / "p.json")
    assert k2 == k and p2 == poses


def test_truncated_payload_names_sizes(tmp_path):
    tio.write_depth(tmp_path / "d", np.ones((4, 4), np.float32))
    raw = (tmp_path / "d").read_bytes()
    (tmp_path / "d").write_bytes(raw[:-6])
    with pytest.raises(tio.FormatError, match="expected 64 payload bytes, found 58") as info:
        tio.read_depth(tmp_path / "d")
    assert info.value.offset == 12 + 58


def test_wrong_magic_fails_fast(tmp_path):
    tio.write_depth(tmp_path / "d", np.ones((2, 2), np.float32))
    with pytest.raises(tio.FormatError, match="magic") as info:
        tio.read_features(tmp_path / "d")
    assert info.value.offset == 0


def test_bad_flag_byte(tmp_path):
    ts = tg.TrajectorySet(np.zeros((2, 1, 2)), np.ones((1, 2), bool))
    tio.write_trajectories(tmp_path / "r", ts)
    raw = bytearray((tmp_path / "r").read_bytes())
    raw[12 + 9 + 8] = 7
    (tmp_path / "r").write_bytes(bytes(raw))
    with pytest.raises(tio.FormatError) as info:
        tio.read_trajectories(tmp_path / "r")
    assert info.value.offset == 12 + 9 + 8


def test_malformed_pose_json(tmp_path):
    (tmp_path / "p.json").write_text('{"intrinsics": {"fx": 1}')
    with pytest.raises(tio.FormatError):
        tio.read_poses(tmp_path / "p.json")
    (tmp_path / "q.json").write_text('{"intrinsics": {"fx": 1, "fy": 1, "cx": 0, "cy": 0}, "frames": [{"R": [1], "t": [0, 0, 0]}]}')
    with pytest.raises(tio.FormatError):
        tio.read_poses(tmp_path / "q.json")


def test_depth_dir_sorted(tmp_path):
    for i in (2, 0, 1):
        tio.write_depth(tmp_path / f"{i:03d}.tadm", np.full((1, 1), i + 1.0, np.float32))
    assert [d[0, 0] for d in tio.read_depth_dir(tmp_path)] == [1.0, 2.0, 3.0]
    (tmp_path / "empty").mkdir()
    with pytest.raises(FileNotFoundError):
        tio.read_depth_dir(tmp_path / "empty")
