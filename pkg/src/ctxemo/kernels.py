"""Hot inner loops for convolution and pooling.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
version.  The numba path is the default when numba imports; set
``CTXEMO_BACKEND=numpy`` to force the fallback.  Both paths produce the same
values up to float rounding order, which the test-suite checks.
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def dec(f):
            return f

        return dec if not args or not callable(args[0]) else args[0]


def _default_backend() -> str:
    name = os.environ.get("CTXEMO_BACKEND", "numba" if HAS_NUMBA else "numpy").lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"CTXEMO_BACKEND must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not HAS_NUMBA:
        return "numpy"
    return name


BACKEND = _default_backend()


def use_backend(name: str) -> str:
    """Switch the active backend; returns the previous one."""
    global BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not importable")
    prev, BACKEND = BACKEND, name
    return prev


def out_size(n: int, k: int, pad: int, stride: int) -> int:
    return (n + 2 * pad - k) // stride + 1


# --------------------------------------------------------------------------
# numba kernels
# --------------------------------------------------------------------------


@njit(cache=True)
def _im2col_nb(x, kh, kw, ph, pw, sh, sw, ho, wo):
    n, c, h, w = x.shape
    cols = np.zeros((n * ho * wo, c * kh * kw), dtype=x.dtype)
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                row = (b * ho + i) * wo + j
                for ch in range(c):
                    for di in range(kh):
                        y = i * sh + di - ph
                        if y < 0 or y >= h:
                            continue
                        base = (ch * kh + di) * kw
                        for dj in range(kw):
                            xx = j * sw + dj - pw
                            if 0 <= xx < w:
                                cols[row, base + dj] = x[b, ch, y, xx]
    return cols


@njit(cache=True)
def _col2im_nb(cols, n, c, h, w, kh, kw, ph, pw, sh, sw, ho, wo):
    dx = np.zeros((n, c, h, w), dtype=cols.dtype)
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                row = (b * ho + i) * wo + j
                for ch in range(c):
                    for di in range(kh):
                        y = i * sh + di - ph
                        if y < 0 or y >= h:
                            continue
                        base = (ch * kh + di) * kw
                        for dj in range(kw):
                            xx = j * sw + dj - pw
                            if 0 <= xx < w:
                                dx[b, ch, y, xx] += cols[row, base + dj]
    return dx


@njit(cache=True)
def _maxpool_fwd_nb(x, kh, kw, ho, wo):
    n, c, h, w = x.shape
    out = np.empty((n, c, ho, wo), dtype=x.dtype)
    arg = np.empty((n, c, ho, wo), dtype=np.int64)
    for b in range(n):
        for ch in range(c):
            for i in range(ho):
                for j in range(wo):
                    best = x[b, ch, i * kh, j * kw]
                    bi = (i * kh) * w + j * kw
                    for di in range(kh):
                        for dj in range(kw):
                            v = x[b, ch, i * kh + di, j * kw + dj]
                            if v > best:
                                best = v
                                bi = (i * kh + di) * w + j * kw + dj
                    out[b, ch, i, j] = best
                    arg[b, ch, i, j] = bi
    return out, arg


@njit(cache=True)
def _maxpool_bwd_nb(g, arg, h, w):
    n, c, ho, wo = g.shape
    dx = np.zeros((n, c, h * w), dtype=g.dtype)
    for b in range(n):
        for ch in range(c):
            for i in range(ho):
                for j in range(wo):
                    dx[b, ch, arg[b, ch, i, j]] += g[b, ch, i, j]
    return dx.reshape((n, c, h, w))


# --------------------------------------------------------------------------
# numpy fallbacks
# --------------------------------------------------------------------------


def _im2col_np(x, kh, kw, ph, pw, sh, sw, ho, wo):
    n, c = x.shape[:2]
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :ho, :wo]
    # (n, c, ho, wo, kh, kw) -> (n, ho, wo, c, kh, kw)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)


def _col2im_np(cols, n, c, h, w, kh, kw, ph, pw, sh, sw, ho, wo):
    dxp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=cols.dtype)
    blocks = cols.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    for di in range(kh):
        for dj in range(kw):
            dxp[:, :, di : di + sh * ho : sh, dj : dj + sw * wo : sw] += blocks[:, :, di, dj]
    return dxp[:, :, ph : ph + h, pw : pw + w]


def _maxpool_fwd_np(x, kh, kw, ho, wo):
    n, c, h, w = x.shape
    xs = x[:, :, : ho * kh, : wo * kw].reshape(n, c, ho, kh, wo, kw).transpose(0, 1, 2, 4, 3, 5)
    flat = xs.reshape(n, c, ho, wo, kh * kw)
    local = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]
    di, dj = np.divmod(local, kw)
    rows = np.arange(ho)[:, None] * kh + di
    colsx = np.arange(wo)[None, :] * kw + dj
    return out, (rows * w + colsx).astype(np.int64)


def _maxpool_bwd_np(g, arg, h, w):
    n, c = g.shape[:2]
    dx = np.zeros((n * c, h * w), dtype=g.dtype)
    idx = arg.reshape(n * c, -1)
    # pooling windows do not overlap, so indices within a row are unique
    np.put_along_axis(dx, idx, g.reshape(n * c, -1), axis=1)
    return dx.reshape(n, c, h, w)


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------


def im2col(x: np.ndarray, kh: int, kw: int, ph: int, pw: int, sh: int = 1, sw: int = 1):
    """Unfold ``x`` of shape (N, C, H, W) into rows of receptive fields.

    Returns ``(cols, ho, wo)`` with ``cols`` of shape (N*ho*wo, C*kh*kw).
    Zero padding ``ph``/``pw`` is applied on both sides.
    """
    n, c, h, w = x.shape
    ho, wo = out_size(h, kh, ph, sh), out_size(w, kw, pw, sw)
    if ho < 1 or wo < 1:
        raise ValueError(f"kernel {kh}x{kw} does not fit input {h}x{w} with padding {ph},{pw}")
    x = np.ascontiguousarray(x)
    if BACKEND == "numba":
        return _im2col_nb(x, kh, kw, ph, pw, sh, sw, ho, wo), ho, wo
    return _im2col_np(x, kh, kw, ph, pw, sh, sw, ho, wo), ho, wo


def col2im(cols: np.ndarray, shape, kh: int, kw: int, ph: int, pw: int, sh: int = 1, sw: int = 1):
    """Adjoint of :func:`im2col`: scatter-add rows back into an (N, C, H, W) array."""
    n, c, h, w = shape
    ho, wo = out_size(h, kh, ph, sh), out_size(w, kw, pw, sw)
    cols = np.ascontiguousarray(cols)
    if BACKEND == "numba":
        return _col2im_nb(cols, n, c, h, w, kh, kw, ph, pw, sh, sw, ho, wo)
    return _col2im_np(cols, n, c, h, w, kh, kw, ph, pw, sh, sw, ho, wo)


def maxpool2d_forward(x: np.ndarray, kh: int, kw: int):
    """Non-overlapping max pool (stride = kernel, trailing remainder dropped).

    Returns the pooled array and the flat (row*W + col) argmax per window.
    """
    n, c, h, w = x.shape
    ho, wo = h // kh, w // kw
    if ho < 1 or wo < 1:
        raise ValueError(f"pool {kh}x{kw} larger than input {h}x{w}")
    x = np.ascontiguousarray(x)
    if BACKEND == "numba":
        return _maxpool_fwd_nb(x, kh, kw, ho, wo)
    return _maxpool_fwd_np(x, kh, kw, ho, wo)


def maxpool2d_backward(g: np.ndarray, arg: np.ndarray, h: int, w: int) -> np.ndarray:
    g = np.ascontiguousarray(g)
    if BACKEND == "numba":
        return _maxpool_bwd_nb(g, arg, h, w)
    return _maxpool_bwd_np(g, arg, h, w)
