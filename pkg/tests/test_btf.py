import struct

import numpy as np
import pytest

from itattack.btf import DTYPE_F32, MAGIC, MalformedFrame, decode, encode, read_file, write_file
from itattack.tensor import ImageTensor


def _tensor(rng, dims=(3, 4, 5)):
    return ImageTensor(rng.uniform(-1, 1, size=dims).astype(np.float32), (-1.0, 1.0))


def test_round_trip_bit_exact(rng):
    t = _tensor(rng)
    back = decode(encode(t))
    assert back.dims == t.dims
    assert np.array_equal(back.data, t.data)


def test_header_layout_golden():
    data = np.array([[[1.0, -0.5]]], dtype=np.float32)
    frame = encode(ImageTensor(data, (-1.0, 1.0)))
    expected = (
        MAGIC
        + bytes([DTYPE_F32, 3])
        + struct.pack("<3I", 1, 1, 2)
        + struct.pack("<2f", 1.0, -0.5)
    )
    assert frame == expected


def test_file_round_trip(tmp_path, rng):
    t = _tensor(rng)
    path = tmp_path / "x.btf"
    write_file(path, t)
    back = read_file(path)
    assert np.array_equal(back.data, t.data)


def test_value_range_passthrough(rng):
    t = ImageTensor(rng.uniform(-3, 3, size=(1, 2, 2)).astype(np.float32), (-4.0, 4.0))
    back = decode(encode(t), value_range=(-4.0, 4.0))
    assert back.value_range == (-4.0, 4.0)
    assert np.array_equal(back.data, t.data)


@pytest.mark.parametrize("cut", [0, 3, 5, 10])
def test_truncated_frame_rejected(rng, cut):
    frame = encode(_tensor(rng))
    with pytest.raises(MalformedFrame):
        decode(frame[:cut])


def test_truncated_payload_rejected(rng):
    frame = encode(_tensor(rng))
    with pytest.raises(MalformedFrame):
        decode(frame[:-1])


def test_trailing_garbage_rejected(rng):
    frame = encode(_tensor(rng))
    with pytest.raises(MalformedFrame):
        decode(frame + b"\x00")


def test_bad_magic_rejected(rng):
    frame = encode(_tensor(rng))
    with pytest.raises(MalformedFrame):
        decode(b"XXXX" + frame[4:])


def test_unknown_dtype_rejected(rng):
    frame = bytearray(encode(_tensor(rng)))
    frame[4] = 0x02
    with pytest.raises(MalformedFrame):
        decode(bytes(frame))


def test_non_image_rank_rejected():
    frame = MAGIC + bytes([DTYPE_F32, 1]) + struct.pack("<I", 2) + struct.pack("<2f", 0.0, 0.0)
    with pytest.raises(MalformedFrame):
        decode(frame)
