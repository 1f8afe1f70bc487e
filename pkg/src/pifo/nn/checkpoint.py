"""PIFO checkpoint files.

Layout (little-endian, no padding)::

    b"PIFO" | u32 version (=1) | u32 tensor count
    per tensor: u16 name length | utf-8 name | u8 ndim | ndim x u32 extents
                | prod(extents) x f32 values

Values are stored as float32 and promoted back to float64 on load.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from ..errors import BadMagicError, CheckpointError, TruncatedFileError, UnsupportedVersionError
from .params import ParamSet
from .tensor import Tensor

MAGIC = b"PIFO"
VERSION = 1


def encode(params: ParamSet) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, t in params.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise CheckpointError(f"parameter name too long: {name[:40]}...")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", t.data.ndim))
        parts.append(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
        parts.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    return b"".join(parts)


def decode(buf: bytes, source: str = "<bytes>") -> ParamSet:
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise TruncatedFileError(f"{source}: truncated while reading {what} "
                                     f"(need {n} bytes at offset {pos}, file has {len(buf)})")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if len(buf) < 4 or buf[:4] != MAGIC:
        if len(buf) < 4 and MAGIC.startswith(buf):
            raise TruncatedFileError(f"{source}: truncated header")
        raise BadMagicError(f"{source}: bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}")
    pos = 4
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise UnsupportedVersionError(f"{source}: unsupported checkpoint version {version}")
    params = ParamSet()
    for i in range(count):
        (nlen,) = struct.unpack("<H", take(2, f"name length of tensor {i}"))
        name = take(nlen, f"name of tensor {i}").decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1, f"ndim of {name}"))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim, f"extents of {name}"))
        n = int(np.prod(dims, dtype=np.int64))
        values = np.frombuffer(take(4 * n, f"values of {name}"), dtype="<f4")
        params[name] = Tensor(values.astype(np.float64).reshape(dims), requires_grad=True)
    if pos != len(buf):
        raise CheckpointError(f"{source}: {len(buf) - pos} trailing bytes after last tensor")
    return params


def save_checkpoint(params: ParamSet, path) -> None:
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(encode(params))
    os.replace(tmp, path)


def load_checkpoint(path) -> ParamSet:
    path = os.fspath(path)
    with open(path, "rb") as fh:
        return decode(fh.read(), source=path)
