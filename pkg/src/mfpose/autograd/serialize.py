"""Flat binary container for named float arrays.

Layout (all integers little-endian)::

    b"MFPT"            magic
    u32 version        currently 1
    u32 meta_len       followed by meta_len bytes of UTF-8 JSON (may be "{}")
    u32 count
    count entries of:
        u16 name_len, name (UTF-8)
        u8 ndim, ndim x u32 extents
        prod(extents) x float64 (little-endian)

float32 arrays are widened to float64 on write, so a round-trip is bit-exact
for either precision.
"""
from __future__ import annotations

import io
import json
import os
import struct
from collections import OrderedDict

import numpy as np

MAGIC = b"MFPT"
VERSION = 1


class FormatError(ValueError):
    pass


def dumps(arrays: dict, meta: dict | None = None) -> bytes:
    buf = io.BytesIO()
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(meta_bytes)))
    buf.write(meta_bytes)
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


def loads(blob: bytes) -> tuple["OrderedDict[str, np.ndarray]", dict]:
    view = memoryview(blob)
    if bytes(view[:4]) != MAGIC:
        raise FormatError("not a parameter container (bad magic)")
    version, meta_len = struct.unpack_from("<II", view, 4)
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    pos = 12
    meta = json.loads(bytes(view[pos:pos + meta_len]).decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", view, pos)
    pos += 4
    arrays: OrderedDict[str, np.ndarray] = OrderedDict()
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", view, pos)
        pos += 2
        name = bytes(view[pos:pos + name_len]).decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<B", view, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", view, pos)
        pos += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(view, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * n
    if pos != len(view):
        raise FormatError(f"{len(view) - pos} trailing bytes after last entry")
    return arrays, meta


def save(path, arrays: dict, meta: dict | None = None) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(dumps(arrays, meta))
    os.replace(tmp, path)


def load(path) -> tuple["OrderedDict[str, np.ndarray]", dict]:
    with open(path, "rb") as fh:
        return loads(fh.read())
