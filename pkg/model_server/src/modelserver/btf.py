"""BTF1 tensor frames.

Layout: b"BTF1" | dtype byte (0x01 = float32) | ndim byte | ndim u32 LE dims |
row-major little-endian float32 payload.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"BTF1"
DTYPE_F32 = 0x01
HEADER = struct.Struct("<4sBB")


class FrameError(ValueError):
    """Bytes are not a complete, well-formed BTF1 frame."""


def encode(array: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(array, dtype="<f4")
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    return HEADER.pack(MAGIC, DTYPE_F32, arr.ndim) + dims + arr.tobytes()


def decode(frame: bytes) -> np.ndarray:
    if len(frame) < HEADER.size:
        raise FrameError("frame shorter than header")
    magic, dtype, ndim = HEADER.unpack_from(frame)
    if magic != MAGIC:
        raise FrameError("bad magic")
    if dtype != DTYPE_F32:
        raise FrameError(f"unsupported dtype 0x{dtype:02x}")
    offset = HEADER.size + 4 * ndim
    if len(frame) < offset:
        raise FrameError("truncated dims")
    shape = struct.unpack_from(f"<{ndim}I", frame, HEADER.size)
    count = 1
    for d in shape:
        count *= d
    if len(frame) != offset + 4 * count:
        raise FrameError("payload size mismatch")
    return np.frombuffer(frame, dtype="<f4", count=count, offset=offset).reshape(shape)
