"""Binary image/frame/mask files and the JSON instrument config.

All binary formats are little-endian: a 4-byte magic, ``u16`` version,
``u32`` side length, then the payload.

* PEIS: ``n*n`` float64 reflectivities then ``n*n`` float64 depths, row-major.
* PEID: per pixel (row-major) ``u32 k`` followed by ``k`` float64 times.
* PEIM: per pixel ``u32 |U|`` followed by ``|U|`` ascending ``u32`` indices.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import CensorMask, DetectionFrame, InstrumentConfig, Scene

VERSION = 1
CONFIG_KEYS = ("eta", "S", "B", "N", "T_r", "T_p", "delta", "c")
_HEADER = struct.Struct("<4sHI")


class FormatError(ValueError):
    pass


def _read_header(buf: bytes, magic: bytes):
    if len(buf) < _HEADER.size:
        raise FormatError("file too short for header")
    got, version, n = _HEADER.unpack_from(buf)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    return n, _HEADER.size


def encode_scene(scene: Scene) -> bytes:
    n = scene.n
    return (
        _HEADER.pack(b"PEIS", VERSION, n)
        + scene.alpha.astype("<f8").tobytes()
        + scene.z.astype("<f8").tobytes()
    )


def decode_image_pair(buf: bytes):
    """Raw (first, second) n-by-n float64 arrays from a PEIS payload, unvalidated."""
    n, off = _read_header(buf, b"PEIS")
    need = off + 16 * n * n
    if len(buf) != need:
        raise FormatError(f"PEIS size {len(buf)} != expected {need}")
    a = np.frombuffer(buf, "<f8", n * n, off).reshape(n, n).astype(np.float64)
    z = np.frombuffer(buf, "<f8", n * n, off + 8 * n * n).reshape(n, n).astype(np.float64)
    return a, z


def write_scene(path, scene: Scene) -> None:
    Path(path).write_bytes(encode_scene(scene))


def read_scene(path) -> Scene:
    return Scene(*decode_image_pair(Path(path).read_bytes()))


def write_image_pair(path, first, second) -> None:
    """PEIS file for arbitrary image pairs (e.g. RMSE maps), skipping scene validation."""
    first = np.asarray(first, dtype="<f8")
    second = np.asarray(second, dtype="<f8")
    if first.shape != second.shape or first.ndim != 2 or first.shape[0] != first.shape[1]:
        raise ValueError("need two square images of equal shape")
    Path(path).write_bytes(_HEADER.pack(b"PEIS", VERSION, first.shape[0]) + first.tobytes() + second.tobytes())


def read_image_pair(path):
    return decode_image_pair(Path(path).read_bytes())


def encode_frame(frame: DetectionFrame) -> bytes:
    parts = [_HEADER.pack(b"PEID", VERSION, frame.n)]
    off = frame.offsets
    for p, k in enumerate(frame.counts.ravel()):
        parts.append(struct.pack("<I", int(k)))
        parts.append(frame.times[off[p] : off[p + 1]].astype("<f8").tobytes())
    return b"".join(parts)


def decode_frame(buf: bytes) -> DetectionFrame:
    n, pos = _read_header(buf, b"PEID")
    counts = np.empty(n * n, dtype=np.int64)
    chunks = []
    for p in range(n * n):
        if pos + 4 > len(buf):
            raise FormatError("truncated PEID file")
        (k,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        if pos + 8 * k > len(buf):
            raise FormatError("truncated PEID file")
        chunks.append(np.frombuffer(buf, "<f8", k, pos))
        pos += 8 * k
        counts[p] = k
    if pos != len(buf):
        raise FormatError("trailing bytes in PEID file")
    times = np.concatenate(chunks).astype(np.float64) if chunks else np.empty(0)
    return DetectionFrame(counts.reshape(n, n), times)


def write_frame(path, frame: DetectionFrame) -> None:
    Path(path).write_bytes(encode_frame(frame))


def read_frame(path) -> DetectionFrame:
    return decode_frame(Path(path).read_bytes())


def encode_mask(mask: CensorMask) -> bytes:
    parts = [_HEADER.pack(b"PEIM", VERSION, mask.n)]
    for idx in mask.indices():
        parts.append(struct.pack("<I", idx.size))
        parts.append(idx.astype("<u4").tobytes())
    return b"".join(parts)


def decode_mask(buf: bytes, counts=None) -> CensorMask:
    """Decode a PEIM payload. ``counts`` (the frame's k per pixel) is needed to size the mask.

    Without counts each pixel is assumed to hold ``max(index) + 1`` detections.
    """
    n, pos = _read_header(buf, b"PEIM")
    indices = []
    for _ in range(n * n):
        if pos + 4 > len(buf):
            raise FormatError("truncated PEIM file")
        (m,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        idx = np.frombuffer(buf, "<u4", m, pos).astype(np.int64)
        pos += 4 * m
        if np.any(np.diff(idx) <= 0):
            raise FormatError("PEIM indices must be strictly ascending")
        indices.append(idx)
    if pos != len(buf):
        raise FormatError("trailing bytes in PEIM file")
    if counts is None:
        counts = np.array([i[-1] + 1 if i.size else 0 for i in indices]).reshape(n, n)
    return CensorMask.from_indices(counts, indices)


def write_mask(path, mask: CensorMask) -> None:
    Path(path).write_bytes(encode_mask(mask))


def read_mask(path, counts=None) -> CensorMask:
    return decode_mask(Path(path).read_bytes(), counts)


def config_to_dict(cfg: InstrumentConfig) -> dict:
    return {k: getattr(cfg, k) for k in CONFIG_KEYS}


def write_config(path, cfg: InstrumentConfig) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")


def read_config(path) -> InstrumentConfig:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise FormatError("config must be a flat JSON object")
    keys = set(data)
    if keys != set(CONFIG_KEYS):
        missing = sorted(set(CONFIG_KEYS) - keys)
        extra = sorted(keys - set(CONFIG_KEYS))
        raise FormatError(f"config keys must be exactly {CONFIG_KEYS}; missing {missing}, unexpected {extra}")
    return InstrumentConfig(**data)
