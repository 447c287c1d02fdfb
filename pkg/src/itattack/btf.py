"""BTF1 binary tensor format.

Frame layout: magic b"BTF1", one dtype byte (0x01 = float32), one ndim byte,
ndim little-endian u32 dims, then the row-major little-endian float32 payload.
"""

from __future__ import annotations

import struct

import numpy as np

from .tensor import ImageTensor

MAGIC = b"BTF1"
DTYPE_F32 = 0x01


class MalformedFrame(ValueError):
    """Bytes do not parse as a complete BTF1 frame."""


def encode(tensor: ImageTensor) -> bytes:
    dims = tensor.dims
    header = MAGIC + struct.pack("<BB", DTYPE_F32, len(dims))
    header += struct.pack(f"<{len(dims)}I", *dims)
    payload = np.ascontiguousarray(tensor.data, dtype="<f4").tobytes()
    return header + payload


def decode(frame: bytes, value_range: tuple[float, float] = (-1.0, 1.0)) -> ImageTensor:
    if len(frame) < 6 or frame[:4] != MAGIC:
        raise MalformedFrame("missing BTF1 magic")
    dtype, ndim = struct.unpack_from("<BB", frame, 4)
    if dtype != DTYPE_F32:
        raise MalformedFrame(f"unsupported dtype code 0x{dtype:02x}")
    offset = 6
    if len(frame) < offset + 4 * ndim:
        raise MalformedFrame("truncated dims header")
    dims = struct.unpack_from(f"<{ndim}I", frame, offset)
    offset += 4 * ndim
    count = int(np.prod(dims)) if dims else 0
    if len(frame) != offset + 4 * count:
        raise MalformedFrame(
            f"payload length {len(frame) - offset} != expected {4 * count}"
        )
    if ndim != 3:
        raise MalformedFrame(f"expected 3 dims for an image tensor, got {ndim}")
    data = np.frombuffer(frame, dtype="<f4", count=count, offset=offset)
    return ImageTensor(data.reshape(dims).astype(np.float32), value_range)


def write_file(path, tensor: ImageTensor) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(tensor))


def read_file(path, value_range: tuple[float, float] = (-1.0, 1.0)) -> ImageTensor:
    with open(path, "rb") as fh:
        return decode(fh.read(), value_range)
