"""Video-only demonstration files.

Layout (little-endian)::

    b"DEMO" | u32 version (=1) | u16 env-id length | utf-8 env id | u32 trajectory count
    per trajectory: u32 T | T x 4096 bytes (one u8 per pixel, 0 or 255, row-major)

The format has no room for states or actions: a loaded DemoSet holds frames only.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import BadMagicError, ConfigError, TruncatedFileError, UnsupportedVersionError
from .render import SIZE

MAGIC = b"DEMO"
VERSION = 1
FRAME_BYTES = SIZE * SIZE


@dataclass(frozen=True)
class DemoSet:
    env_id: str
    trajectories: tuple[np.ndarray, ...]  # each uint8 [T, 64, 64] with values 0/1

    def __post_init__(self):
        for traj in self.trajectories:
            if traj.ndim != 3 or traj.shape[1:] != (SIZE, SIZE) or traj.shape[0] < 1:
                raise ConfigError(f"demo trajectory must be [T>=1, {SIZE}, {SIZE}], got {traj.shape}")
            if traj.max() > 1 or traj.min() < 0:
                raise ConfigError("demo frames must hold only 0/1 pixel values")

    @property
    def num_frames(self) -> int:
        return sum(t.shape[0] for t in self.trajectories)


def encode_demos(demos: DemoSet) -> bytes:
    env = demos.env_id.encode("utf-8")
    parts = [MAGIC, struct.pack("<IH", VERSION, len(env)), env,
             struct.pack("<I", len(demos.trajectories))]
    for traj in demos.trajectories:
        parts.append(struct.pack("<I", traj.shape[0]))
        parts.append(np.where(np.asarray(traj) > 0, 255, 0).astype(np.uint8).tobytes())
    return b"".join(parts)


def decode_demos(buf: bytes, source: str = "<bytes>") -> DemoSet:
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(buf):
            raise TruncatedFileError(f"{source}: truncated while reading {what}")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if buf[:4] != MAGIC:
        raise BadMagicError(f"{source}: bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}")
    pos = 4
    version, nlen = struct.unpack("<IH", take(6, "header"))
    if version != VERSION:
        raise UnsupportedVersionError(f"{source}: unsupported demo version {version}")
    env_id = take(nlen, "env id").decode("utf-8")
    (count,) = struct.unpack("<I", take(4, "trajectory count"))
    trajs = []
    for i in range(count):
        (T,) = struct.unpack("<I", take(4, f"length of trajectory {i}"))
        raw = np.frombuffer(take(T * FRAME_BYTES, f"frames of trajectory {i}"), dtype=np.uint8)
        lit = raw == 255
        if not np.all(lit | (raw == 0)):
            raise ConfigError(f"{source}: trajectory {i} has pixel bytes other than 0/255")
        trajs.append(lit.reshape(T, SIZE, SIZE).astype(np.uint8))
    return DemoSet(env_id, tuple(trajs))


def write_demos(demos: DemoSet, path) -> None:
    with open(os.fspath(path), "wb") as fh:
        fh.write(encode_demos(demos))


def read_demos(path) -> DemoSet:
    with open(os.fspath(path), "rb") as fh:
        return decode_demos(fh.read(), source=os.fspath(path))


def frames_as_float(traj: np.ndarray) -> np.ndarray:
    """Loader view: 255 -> 1.0, 0 -> 0.0."""
    return traj.astype(np.float64)
