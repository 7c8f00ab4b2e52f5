"""Binary weight files.

Layout (all integers little-endian uint32, scalars little-endian float32)::

    magic      8 bytes   b"AFPWGHT\\0"
    version    u32       currently 1
    count      u32       number of named tensors
    count x:
        name_len u32, name bytes (utf-8)
        rank     u32, extents u32 x rank
        data     float32 x prod(extents), C order
    meta_count u32       trailing key/value metadata (may be 0)
    meta_count x:
        key_len u32, key bytes, value_len u32, value bytes (utf-8)

The metadata trailer carries tags such as the prediction direction a weight
set was trained for.  Readers that only need tensors can stop after the
tensor section.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"AFPWGHT\0"
VERSION = 1


class WeightFormatError(ValueError):
    pass


def dumps(tensors: Mapping[str, np.ndarray], meta: Mapping[str, str] | None = None) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    meta = dict(meta or {})
    parts.append(struct.pack("<I", len(meta)))
    for key, value in meta.items():
        k, v = str(key).encode("utf-8"), str(value).encode("utf-8")
        parts.append(struct.pack("<I", len(k)) + k + struct.pack("<I", len(v)) + v)
    return b"".join(parts)


def loads(buf: bytes) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    view = memoryview(buf)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise WeightFormatError("truncated weight file")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    def u32() -> int:
        return struct.unpack("<I", take(4))[0]

    if bytes(take(len(MAGIC))) != MAGIC:
        raise WeightFormatError("bad magic")
    version = u32()
    if version != VERSION:
        raise WeightFormatError(f"unsupported version {version}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(u32()):
        name = bytes(take(u32())).decode("utf-8")
        rank = u32()
        shape = tuple(u32() for _ in range(rank))
        n = int(np.prod(shape)) if shape else 1
        tensors[name] = np.frombuffer(bytes(take(4 * n)), dtype="<f4").reshape(shape).copy()
    meta: dict[str, str] = {}
    if pos < len(view):
        for _ in range(u32()):
            key = bytes(take(u32())).decode("utf-8")
            meta[key] = bytes(take(u32())).decode("utf-8")
    return tensors, meta


def save(path, tensors: Mapping[str, np.ndarray], meta: Mapping[str, str] | None = None) -> bytes:
    blob = dumps(tensors, meta)
    Path(path).write_bytes(blob)
    return blob


def load(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    return loads(Path(path).read_bytes())


def content_hash(blob: bytes) -> str:
    """Git blob-style SHA-1 of a byte string."""
    return hashlib.sha1(b"blob %d\0" % len(blob) + blob).hexdigest()
