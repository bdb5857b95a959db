"""Binary tensor files (EMT1) and 8-bit grayscale PGM dumps.

EMT1 layout::

    bytes 0-3   magic b"EMT1"
    byte  4     dtype code (0 = float32, 1 = float64)
    byte  5     ndim
    bytes 6-7   zero
    ndim x u64  dims, little-endian
    payload     row-major little-endian values
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"EMT1"
_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_HEADER = 8
_U64_MAX = 2**64 - 1


class FormatError(ValueError):
    pass


def encode_emt1(arr) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype == np.float32:
        code = 0
    elif arr.dtype == np.float64:
        code = 1
    else:
        raise FormatError(f"EMT1 stores float32/float64 only, got {arr.dtype}")
    if arr.ndim > 255:
        raise FormatError("too many dimensions for EMT1")
    head = MAGIC + struct.pack("<BBH", code, arr.ndim, 0)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + dims + np.ascontiguousarray(arr, dtype=_CODES[code]).tobytes()


def decode_emt1(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER or buf[:4] != MAGIC:
        raise FormatError("bad magic: not an EMT1 tensor")
    code, ndim, reserved = struct.unpack_from("<BBH", buf, 4)
    if code not in _CODES:
        raise FormatError(f"unknown dtype code {code}")
    if reserved != 0:
        raise FormatError("reserved header bytes must be zero")
    dims_end = _HEADER + 8 * ndim
    if len(buf) < dims_end:
        raise FormatError("truncated dimension table")
    dims = struct.unpack_from(f"<{ndim}Q", buf, _HEADER)
    dtype = _CODES[code]
    count = 1
    for d in dims:
        count *= d
        if count * dtype.itemsize > _U64_MAX:
            raise FormatError("dimension product overflows")
    payload = len(buf) - dims_end
    if payload != count * dtype.itemsize:
        raise FormatError(f"payload is {payload} bytes, header implies {count * dtype.itemsize}")
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=dims_end).reshape(dims)
    return arr.astype(dtype.newbyteorder("="), copy=True)


def write_emt1(path, arr) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_emt1(arr))


def read_emt1(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_emt1(fh.read())


def pgm_bytes(img: np.ndarray) -> bytes:
    """Binary PGM (P5, maxval 255) from a 2-D uint8 array."""
    img = np.asarray(img)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise FormatError("PGM needs a 2-D uint8 array")
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def write_pgm(path, img: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(pgm_bytes(img))


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise FormatError("not a P5 PGM with maxval 255")
    w, h = (int(v) for v in parts[1].split())
    body = parts[3]
    if len(body) != w * h:
        raise FormatError("PGM payload length mismatch")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


def to_gray8(values: np.ndarray, lo: float | None = None, hi: float | None = None) -> np.ndarray:
    """Linearly map values into [0, 255]; a constant field maps to 0 unless ``lo``/``hi`` are given."""
    v = np.asarray(values, dtype=np.float64)
    lo = float(v.min()) if lo is None else lo
    hi = float(v.max()) if hi is None else hi
    if hi <= lo:
        return np.zeros(v.shape, dtype=np.uint8)
    return np.clip(np.rint((v - lo) / (hi - lo) * 255.0), 0, 255).astype(np.uint8)


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return str(path)
