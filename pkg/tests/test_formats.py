"""EMT1 tensor files, PGM dumps and grayscale mapping."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from ctxemo.fileio import (FormatError, decode_emt1, encode_emt1, pgm_bytes, read_emt1, read_pgm, to_gray8,
                           write_emt1, write_pgm)


@settings(max_examples=80, deadline=None)
@given(arrays(st.sampled_from([np.float32, np.float64]), array_shapes(min_dims=0, max_dims=4, max_side=5),
              elements=st.floats(-1e6, 1e6, allow_nan=False, width=32)))
def test_emt1_roundtrip_is_byte_exact(arr):
    buf = encode_emt1(arr)
    back = decode_emt1(buf)
    assert back.dtype == arr.dtype and back.shape == arr.shape
    assert back.tobytes() == arr.tobytes()
    assert encode_emt1(back) == buf


def test_emt1_header_layout():
    buf = encode_emt1(np.arange(6, dtype=np.float64).reshape(2, 3))
    assert buf[:4] == b"EMT1"
    assert buf[4] == 1 and buf[5] == 2 and buf[6:8] == b"\0\0"
    assert struct.unpack_from("<2Q", buf, 8) == (2, 3)
    assert len(buf) == 8 + 16 + 6 * 8


def test_emt1_file_roundtrip(tmp_path):
    arr = np.random.default_rng(0).standard_normal((3, 4)).astype(np.float32)
    write_emt1(tmp_path / "a.emt1", arr)
    assert read_emt1(tmp_path / "a.emt1").tobytes() == arr.tobytes()
    assert (tmp_path / "a.emt1").read_bytes() == encode_emt1(arr)


def test_emt1_rejects_wrong_magic():
    buf = bytearray(encode_emt1(np.zeros(2, np.float32)))
    buf[:4] = b"EMT2"
    with pytest.raises(FormatError, match="magic"):
        decode_emt1(bytes(buf))


def test_emt1_rejects_payload_mismatch():
    buf = encode_emt1(np.zeros(4, np.float32))
    with pytest.raises(FormatError, match="payload"):
        decode_emt1(buf[:-1])
    with pytest.raises(FormatError, match="payload"):
        decode_emt1(buf + b"\0")


def test_emt1_rejects_dimension_overflow():
    buf = b"EMT1" + struct.pack("<BBH", 0, 2, 0) + struct.pack("<2Q", 2**40, 2**40)
    with pytest.raises(FormatError, match="overflow"):
        decode_emt1(buf)


def test_emt1_rejects_unknown_dtype_and_truncation():
    with pytest.raises(FormatError):
        decode_emt1(b"EMT1" + struct.pack("<BBH", 7, 0, 0))
    with pytest.raises(FormatError):
        decode_emt1(b"EMT1" + struct.pack("<BBH", 0, 3, 0) + b"\0" * 8)
    with pytest.raises(FormatError):
        encode_emt1(np.zeros(2, dtype=np.int32))


def test_pgm_header_is_exact(tmp_path):
    img = np.full((224, 224), 128, dtype=np.uint8)
    data = pgm_bytes(img)
    assert data.startswith(b"P5\n224 224\n255\n")
    assert len(data) == len(b"P5\n224 224\n255\n") + 224 * 224
    write_pgm(tmp_path / "x.pgm", img)
    np.testing.assert_array_equal(read_pgm(tmp_path / "x.pgm"), img)


def test_pgm_rejects_non_uint8():
    with pytest.raises(FormatError):
        pgm_bytes(np.zeros((4, 4)))


def test_to_gray8_mapping():
    np.testing.assert_array_equal(to_gray8(np.array([0.0, 0.5, 1.0]), 0.0, 1.0), [0, 128, 255])
    np.testing.assert_array_equal(to_gray8(np.array([2.0, 4.0])), [0, 255])
    assert to_gray8(np.full(3, 7.0)).tolist() == [0, 0, 0]
