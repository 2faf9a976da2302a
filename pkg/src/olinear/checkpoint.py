"""Binary tensor container used for checkpoints and precomputed bases.

Layout (all integers little-endian)::

    b"OLCK" | u32 version | u32 config_len | config text (UTF-8, "key = value" lines)
    u32 n_tensors
    repeated: u32 name_len | name (UTF-8) | u32 ndim | u64 * ndim shape | f64 * prod(shape) data
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from olinear.errors import CheckpointError

MAGIC = b"OLCK"
VERSION = 1


def format_config(config: dict) -> str:
    lines = []
    for key, value in config.items():
        if "\n" in str(value) or "=" in str(key):
            raise CheckpointError(f"config entry {key!r} cannot be stored in a flat key-value block")
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_config(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(f"malformed config line {line!r}")
        out[key.strip()] = value.strip()
    return out


def encode(tensors: dict, config: dict | None = None) -> bytes:
    cfg = format_config(config or {}).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(cfg)), cfg, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"file truncated while reading {what}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode(buf: bytes) -> tuple[dict, dict]:
    r = _Reader(buf)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}; not an OLCK file")
    version, cfg_len = r.unpack("<II", "header")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    config = parse_config(r.take(cfg_len, "config block").decode("utf-8"))
    (count,) = r.unpack("<I", "tensor count")
    tensors = {}
    for i in range(count):
        (name_len,) = r.unpack("<I", f"name length of tensor #{i}")
        name = r.take(name_len, f"name of tensor #{i}").decode("utf-8")
        (ndim,) = r.unpack("<I", f"rank of tensor {name!r}")
        shape = r.unpack(f"<{ndim}Q", f"shape of tensor {name!r}")
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        data = r.take(8 * size, f"data of tensor {name!r}")
        if name in tensors:
            raise CheckpointError(f"duplicate tensor {name!r}")
        tensors[name] = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} trailing bytes after last tensor")
    return tensors, config


def write(path, tensors: dict, config: dict | None = None):
    Path(path).write_bytes(encode(tensors, config))


def read(path) -> tuple[dict, dict]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"no such checkpoint: {path}")
    return decode(path.read_bytes())
