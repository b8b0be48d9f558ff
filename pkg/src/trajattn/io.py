"""Binary tensor formats and the pose JSON document.

All binary formats start with a 4-byte magic tag followed by little-endian
``u32`` dimensions and a row-major payload.

========  =================================  ======================================
magic     header                             payload
========  =================================  ======================================
``TADM``  H, W                               H*W f32 depths
``TATK``  F, L                               F*L records (f32 x, f32 y, u8 visible)
``TATR``  L, F                               L*F records (f32 x, f32 y, u8 valid)
``TAFV``  F, H, W, C                         F*H*W*C f32
``TAAW``  C, heads                           wq, wk, wv, wo as C*C f32 each
========  =================================  ======================================
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from .attnkernel import AttentionWeights
from .geomcore import Extrinsics, Intrinsics
from .trajgen import PointTracks, TrajectorySet

_RECORD = np.dtype([("x", "<f4"), ("y", "<f4"), ("flag", "u1")])


class FormatError(OSError):
    """Malformed or truncated file; ``offset`` is the byte position of the problem."""

    def __init__(self, path, offset, message):
        super().__init__(f"{path}: byte {offset}: {message}")
        self.path = path
        self.offset = offset


def _read_header(path, magic, ndims):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != magic:
        raise FormatError(path, 0, f"expected magic {magic!r}, found {blob[:4]!r}")
    need = 4 + 4 * ndims
    if len(blob) < need:
        raise FormatError(path, len(blob), f"header truncated: expected {need} bytes, got {len(blob)}")
    dims = struct.unpack(f"<{ndims}I", blob[4:need])
    return blob, dims, need


def _payload(path, blob, start, nbytes):
    actual = len(blob) - start
    if actual != nbytes:
        offset = start + min(actual, nbytes)
        raise FormatError(path, offset, f"expected {nbytes} payload bytes, found {actual}")
    return blob[start:start + nbytes]


def _write(path, magic, dims, payload: bytes):
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        fh.write(payload)


def read_depth(path) -> np.ndarray:
    blob, (h, w), start = _read_header(path, b"TADM", 2)
    data = _payload(path, blob, start, 4 * h * w)
    return np.frombuffer(data, dtype="<f4").reshape(h, w).astype(np.float32)


def write_depth(path, depth):
    depth = np.asarray(depth)
    if depth.ndim != 2:
        raise ValueError(f"depth must be 2D, got shape {depth.shape}")
    _write(path, b"TADM", depth.shape, depth.astype("<f4").tobytes())


def read_features(path) -> np.ndarray:
    blob, dims, start = _read_header(path, b"TAFV", 4)
    data = _payload(path, blob, start, 4 * int(np.prod(dims)))
    return np.frombuffer(data, dtype="<f4").reshape(dims).astype(np.float32)


def write_features(path, volume):
    volume = np.asarray(volume)
    if volume.ndim != 4:
        raise ValueError(f"feature volume must be 4D, got shape {volume.shape}")
    _write(path, b"TAFV", volume.shape, volume.astype("<f4").tobytes())


def read_weights(path) -> AttentionWeights:
    blob, (C, heads), start = _read_header(path, b"TAAW", 2)
    data = _payload(path, blob, start, 4 * 4 * C * C)
    mats = np.frombuffer(data, dtype="<f4").reshape(4, C, C).astype(np.float32)
    return AttentionWeights(*mats, heads=heads)


def write_weights(path, w: AttentionWeights):
    payload = b"".join(np.asarray(m).astype("<f4").tobytes() for m in (w.wq, w.wk, w.wv, w.wo))
    _write(path, b"TAAW", (w.channels, w.heads), payload)


def _read_records(path, magic):
    blob, (a, b), start = _read_header(path, magic, 2)
    rec = np.frombuffer(_payload(path, blob, start, _RECORD.itemsize * a * b), dtype=_RECORD)
    if np.any(rec["flag"] > 1):
        bad = int(np.argmax(rec["flag"] > 1))
        raise FormatError(path, start + bad * _RECORD.itemsize + 8, "flag byte must be 0 or 1")
    xy = np.stack([rec["x"], rec["y"]], axis=-1).reshape(a, b, 2)
    return xy, rec["flag"].reshape(a, b).astype(bool)


def _records(xy, flags):
    rec = np.empty(flags.size, dtype=_RECORD)
    rec["x"] = xy[..., 0].ravel()
    rec["y"] = xy[..., 1].ravel()
    rec["flag"] = flags.ravel()
    return rec.tobytes()


def read_tracks(path) -> PointTracks:
    xy, visible = _read_records(path, b"TATK")
    return PointTracks(xy.astype(np.float64), visible)


def write_tracks(path, tracks: PointTracks):
    _write(path, b"TATK", (tracks.frames, tracks.count), _records(tracks.positions, tracks.visible))


def read_trajectories(path) -> TrajectorySet:
    xy, valid = _read_records(path, b"TATR")
    return TrajectorySet(xy.astype(np.float64), valid.T.copy())


def write_trajectories(path, ts: TrajectorySet):
    _write(path, b"TATR", (ts.count, ts.frames), _records(ts.coords, ts.mask.T))


def read_poses(path):
    """Return ``(intrinsics, [Extrinsics, ...])`` from a pose JSON document."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(path, exc.pos, f"invalid JSON: {exc.msg}") from None
    try:
        k = doc["intrinsics"]
        intr = Intrinsics(float(k["fx"]), float(k["fy"]), float(k["cx"]), float(k["cy"]))
        frames = [Extrinsics(np.reshape(np.asarray(fr["R"], dtype=np.float64), (3, 3)),
                             np.asarray(fr["t"], dtype=np.float64).reshape(3))
                  for fr in doc["frames"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(path, 0, f"missing or malformed field: {exc}") from None
    return intr, frames


def write_poses(path, intrinsics: Intrinsics, poses):
    doc = {
        "intrinsics": {"fx": intrinsics.fx, "fy": intrinsics.fy, "cx": intrinsics.cx, "cy": intrinsics.cy},
        "frames": [{"R": [float(x) for x in p.rotation.ravel()], "t": [float(x) for x in p.translation]}
                   for p in poses],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def read_depth_dir(path):
    """Depth maps ``*.tadm`` from a directory, in sorted filename order."""
    names = sorted(n for n in os.listdir(path) if n.endswith(".tadm"))
    if not names:
        raise FileNotFoundError(f"no .tadm depth files in {path}")
    return [read_depth(os.path.join(path, n)) for n in names]
