"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"SDPM" | u32 version | u64 metadata length | metadata (UTF-8 JSON)
    u32 tensor count | per tensor:
        u32 name length | name (UTF-8) | u32 rank | u64 dims[rank] | f64 values (C order)
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SDPM"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(metadata: dict, tensors: dict[str, np.ndarray]) -> bytes:
    meta = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out = [MAGIC, struct.pack("<IQ", VERSION, len(meta)), meta, struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype="<f8")
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)
        out.append(struct.pack(f"<I{arr.ndim}Q", arr.ndim, *arr.shape))
        out.append(arr.tobytes(order="C"))
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(
                f"truncated checkpoint: need {n} bytes for {what} at offset {self.pos}, "
                f"only {len(self.data) - self.pos} left")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}; not a checkpoint")
    version, meta_len = r.unpack("<IQ", "header")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    try:
        metadata = json.loads(r.take(meta_len, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"corrupt metadata block: {err}") from err
    (count,) = r.unpack("<I", "tensor count")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<I", "tensor name length")
        name = r.take(name_len, "tensor name").decode("utf-8")
        (rank,) = r.unpack("<I", f"rank of {name}")
        dims = r.unpack(f"<{rank}Q", f"dims of {name}")
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        values = np.frombuffer(r.take(8 * size, f"values of {name}"), dtype="<f8")
        tensors[name] = values.astype(np.float64).reshape(dims)
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after offset {r.pos}")
    return metadata, tensors


def save_checkpoint(path, metadata: dict, tensors: dict[str, np.ndarray]) -> None:
    path = Path(path)
    blob = encode_checkpoint(metadata, tensors)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(blob)
        tmp.replace(path)
    except OSError as err:
        raise OSError(f"cannot write checkpoint {path}: {err.strerror}") from err


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as err:
        raise OSError(f"cannot read checkpoint {path}: {err.strerror}") from err
    return decode_checkpoint(data)
