"""Differentiable primitives.

Each function takes tensors (or array-likes), computes the forward value with
numpy or the kernels in :mod:`ctxemo.kernels`, and records a backward rule
returning one gradient per parent.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import kernels
from .tensor import ShapeError, Tensor, as_tensor, record


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _pair(v) -> tuple[int, int]:
    return (v, v) if isinstance(v, int) else tuple(v)


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# --------------------------------------------------------------------------
# element-wise arithmetic
# --------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _check_broadcast("add", a, b)
    return record("add", a.data + b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _check_broadcast("sub", a, b)
    return record("sub", a.data - b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def neg(a) -> Tensor:
    a = _lift(a)
    return record("neg", -a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _check_broadcast("mul", a, b)
    return record("mul", a.data * b.data, (a, b),
                  lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _check_broadcast("div", a, b)
    out = a.data / b.data

    def backward(g):
        ga = g / b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * out, b.shape)

    return record("div", out, (a, b), backward)


def power(a, p: float) -> Tensor:
    """Element-wise ``a ** p`` for a scalar exponent."""
    a = _lift(a)
    p = float(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data ** p

    def backward(g):
        if p == 0.0:
            return (np.zeros_like(a.data),)
        return (g * p * a.data ** (p - 1.0),)

    return record("power", out, (a,), backward)


def exp(a) -> Tensor:
    a = _lift(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return record("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = _lift(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return record("log", out, (a,), lambda g: (g / a.data,))


def clamp(a, lo: float | None = None, hi: float | None = None) -> Tensor:
    """Clip values; gradient flows only where the input was inside the range."""
    a = _lift(a)
    out = np.clip(a.data, lo, hi)
    mask = np.ones(a.shape, dtype=bool)
    if lo is not None:
        mask &= a.data >= lo
    if hi is not None:
        mask &= a.data <= hi
    return record("clamp", out, (a,), lambda g: (g * mask,))


def relu(a) -> Tensor:
    a = _lift(a)
    mask = a.data > 0
    return record("relu", a.data * mask, (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = _lift(a)
    x = a.data
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
    return record("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def logsigmoid(a) -> Tensor:
    """``log(sigmoid(a))`` without overflow for large ``|a|``."""
    a = _lift(a)
    x = a.data
    out = (np.minimum(x, 0) - np.log1p(np.exp(-np.abs(x)))).astype(x.dtype)

    def backward(g):
        e = np.exp(-np.abs(x))
        s_neg = np.where(x >= 0, e / (1.0 + e), 1.0 / (1.0 + e))  # sigmoid(-x)
        return (g * s_neg,)

    return record("logsigmoid", out, (a,), backward)


def softmax(a, axis: int = -1) -> Tensor:
    a = _lift(a)
    if a.ndim == 0 or a.shape[axis] == 0:
        raise ShapeError("softmax over an empty axis")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return record("softmax", out, (a,), backward)


# --------------------------------------------------------------------------
# reductions and shape ops
# --------------------------------------------------------------------------


def _axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = _lift(a)
    axes = _axes(axis, a.ndim)
    out = np.asarray(a.data.sum(axis=axes, keepdims=keepdims))

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return record("sum", out, (a,), backward)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    axes = _axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    if count == 0:
        raise ShapeError("mean over an empty axis")
    out = np.asarray(a.data.mean(axis=axes, keepdims=keepdims))

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return record("mean", out, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = _lift(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {a.shape} into {shape}") from None
    return record("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = _lift(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return record("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [_lift(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of an empty list")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    bounds = np.cumsum([0] + [t.shape[axis] for t in ts])

    def backward(g):
        return tuple(np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:]))

    return record("concat", out, ts, backward)


def getitem(a, index) -> Tensor:
    a = _lift(a)
    out = np.array(a.data[index])

    def backward(g):
        dx = np.zeros_like(a.data)
        np.add.at(dx, index, g)
        return (dx,)

    return record("getitem", out, (a,), backward)


def split(a, sizes: Sequence[int], axis: int = 0) -> list[Tensor]:
    """Inverse of :func:`concat` for the given section sizes."""
    a = _lift(a)
    if int(np.sum(sizes)) != a.shape[axis]:
        raise ShapeError(f"split sizes {list(sizes)} do not cover axis of length {a.shape[axis]}")
    parts, lo = [], 0
    for n in sizes:
        idx = [slice(None)] * a.ndim
        idx[axis] = slice(lo, lo + n)
        parts.append(getitem(a, tuple(idx)))
        lo += n
    return parts


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [_lift(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis % (t.ndim + 1)] + (1,) + t.shape[axis % (t.ndim + 1):]) for t in ts]
    return concat(expanded, axis=axis)


def pad(a, widths: Sequence[tuple[int, int]], mode: str = "constant") -> Tensor:
    """Pad with zeros (``constant``) or by repeating the border (``edge``)."""
    a = _lift(a)
    widths = [tuple(w) for w in widths]
    if len(widths) != a.ndim:
        raise ShapeError(f"pad widths for {len(widths)} axes, tensor has {a.ndim}")
    if mode not in ("constant", "edge"):
        raise ValueError(f"unsupported pad mode {mode!r}")
    out = np.pad(a.data, widths, mode=mode)

    def backward(g):
        for ax, (lo, hi) in enumerate(widths):
            if lo == 0 and hi == 0:
                continue
            n = a.shape[ax]
            core = np.take(g, np.arange(lo, lo + n), axis=ax)
            if mode == "edge":
                core = core.copy()
                first = [slice(None)] * g.ndim
                last = [slice(None)] * g.ndim
                first[ax], last[ax] = slice(0, 1), slice(n - 1, n)
                if lo:
                    core[tuple(first)] += np.take(g, np.arange(0, lo), axis=ax).sum(axis=ax, keepdims=True)
                if hi:
                    core[tuple(last)] += np.take(g, np.arange(lo + n, lo + n + hi), axis=ax).sum(axis=ax, keepdims=True)
            g = core
        return (g,)

    return record("pad", out, (a,), backward)


# --------------------------------------------------------------------------
# linear algebra, convolution, pooling
# --------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeError("matmul needs at least 1-d operands")
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul: {exc}") from None

    def backward(g):
        A = a.data[None, :] if a.ndim == 1 else a.data
        B = b.data[:, None] if b.ndim == 1 else b.data
        G = g
        if a.ndim == 1:
            G = np.expand_dims(G, -2)
        if b.ndim == 1:
            G = np.expand_dims(G, -1)
        ga = np.matmul(G, np.swapaxes(B, -1, -2))
        gb = np.matmul(np.swapaxes(A, -1, -2), G)
        if a.ndim == 1:
            ga = ga[..., 0, :]
        if b.ndim == 1:
            gb = gb[..., 0]
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return record("matmul", out, (a, b), backward)


def conv2d(x, w, b=None, stride=1, padding=0) -> Tensor:
    """2-D cross-correlation. ``x`` (N, C, H, W), ``w`` (O, C, kh, kw), ``b`` (O,)."""
    x, w = _lift(x), _lift(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and weight, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: input has {x.shape[1]} channels, weight expects {w.shape[1]}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    o, c, kh, kw = w.shape
    n = x.shape[0]
    cols, ho, wo = kernels.im2col(x.data, kh, kw, ph, pw, sh, sw)
    wmat = w.data.reshape(o, -1)
    out = cols @ wmat.T
    parents = [x, w]
    if b is not None:
        b = _lift(b)
        if b.shape != (o,):
            raise ShapeError(f"conv2d bias shape {b.shape} != ({o},)")
        out += b.data
        parents.append(b)
    out = out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)

    def backward(g):
        gm = g.transpose(0, 2, 3, 1).reshape(-1, o)
        gw = (gm.T @ cols).reshape(w.shape)
        gx = kernels.col2im(gm @ wmat, x.shape, kh, kw, ph, pw, sh, sw) if x.requires_grad else None
        grads = [gx, gw]
        if b is not None:
            grads.append(gm.sum(axis=0))
        return tuple(grads)

    return record("conv2d", np.ascontiguousarray(out), parents, backward)


def conv1d(x, w, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    """1-D cross-correlation. ``x`` (N, C, L), ``w`` (O, C, k), ``b`` (O,)."""
    x, w = _lift(x), _lift(w)
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeError(f"conv1d expects 3-d input and weight, got {x.shape}, {w.shape}")
    n, c, L = x.shape
    o, _, k = w.shape
    y = conv2d(reshape(x, (n, c, 1, L)), reshape(w, (o, w.shape[1], 1, k)), b,
               stride=(1, stride), padding=(0, padding))
    return reshape(y, (n, o, y.shape[-1]))


def maxpool2d(x, kernel=2) -> Tensor:
    """Non-overlapping max pooling with stride equal to the kernel."""
    x = _lift(x)
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d expects (N, C, H, W), got {x.shape}")
    kh, kw = _pair(kernel)
    out, arg = kernels.maxpool2d_forward(x.data, kh, kw)
    h, w = x.shape[2:]
    return record("maxpool2d", out, (x,), lambda g: (kernels.maxpool2d_backward(g, arg, h, w),))


def maxpool1d(x, kernel: int = 2) -> Tensor:
    x = _lift(x)
    if x.ndim != 3:
        raise ShapeError(f"maxpool1d expects (N, C, L), got {x.shape}")
    n, c, L = x.shape
    y = maxpool2d(reshape(x, (n, c, 1, L)), (1, kernel))
    return reshape(y, (n, c, y.shape[-1]))


def global_avg_pool(x) -> Tensor:
    """Mean over every axis after the channel axis: (N, C, ...) -> (N, C)."""
    x = _lift(x)
    if x.ndim < 3:
        raise ShapeError(f"global_avg_pool expects (N, C, ...), got {x.shape}")
    return mean(x, axis=tuple(range(2, x.ndim)))


def avg_pool2d(x, factor: int) -> Tensor:
    """Non-overlapping average pooling by an integer factor (H and W must divide)."""
    x = _lift(x)
    n, c, h, w = x.shape
    if h % factor or w % factor:
        raise ShapeError(f"avg_pool2d factor {factor} does not divide {h}x{w}")
    return mean(reshape(x, (n, c, h // factor, factor, w // factor, factor)), axis=(3, 5))


def batchnorm(x, gamma, beta, running_mean: np.ndarray, running_var: np.ndarray,
              training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Batch normalization over every axis except the channel axis 1.

    In training mode batch statistics are used and the running buffers are
    updated in place (unbiased variance, as PyTorch does).  In eval mode the
    running buffers are used and the map is a fixed affine transform.
    """
    x, gamma, beta = _lift(x), _lift(gamma), _lift(beta)
    if x.ndim < 2:
        raise ShapeError(f"batchnorm expects (N, C, ...), got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm parameters must have shape ({c},)")
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, c) + (1,) * (x.ndim - 2)
    gb = gamma.data.reshape(bshape)
    if training:
        m = int(np.prod([x.shape[ax] for ax in axes]))
        mu = x.data.mean(axis=axes, keepdims=True)
        var = x.data.var(axis=axes, keepdims=True)
        unbiased = var * (m / max(m - 1, 1))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu.reshape(c)
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased.reshape(c)
    else:
        m = None
        mu = running_mean.reshape(bshape).astype(x.dtype)
        var = running_var.reshape(bshape).astype(x.dtype)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = (gb * xhat + beta.data.reshape(bshape)).astype(x.dtype)

    def backward(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gb
        if training:
            dx = inv_std / m * (m * dxhat - dxhat.sum(axis=axes, keepdims=True)
                                - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True))
        else:
            dx = dxhat * inv_std
        return dx, dgamma, dbeta

    return record("batchnorm", out, (x, gamma, beta), backward)


# --------------------------------------------------------------------------
# operator sugar
# --------------------------------------------------------------------------


def _bind():
    T = Tensor
    T.__add__ = lambda s, o: add(s, o)
    T.__radd__ = lambda s, o: add(o, s)
    T.__sub__ = lambda s, o: sub(s, o)
    T.__rsub__ = lambda s, o: sub(o, s)
    T.__mul__ = lambda s, o: mul(s, o)
    T.__rmul__ = lambda s, o: mul(o, s)
    T.__truediv__ = lambda s, o: div(s, o)
    T.__rtruediv__ = lambda s, o: div(o, s)
    T.__neg__ = lambda s: neg(s)
    T.__pow__ = lambda s, p: power(s, p)
    T.__matmul__ = lambda s, o: matmul(s, o)
    T.__getitem__ = lambda s, i: getitem(s, i)
    T.sum = lambda s, axis=None, keepdims=False: sum(s, axis, keepdims)
    T.mean = lambda s, axis=None, keepdims=False: mean(s, axis, keepdims)
    T.reshape = lambda s, *shape: reshape(s, shape[0] if len(shape) == 1 and not isinstance(shape[0], int) else shape)
    T.transpose = lambda s, *axes: transpose(s, axes if axes else None)
    T.relu = lambda s: relu(s)
    T.sigmoid = lambda s: sigmoid(s)
    T.exp = lambda s: exp(s)
    T.log = lambda s: log(s)


_bind()

__all__ = [
    "add", "sub", "neg", "mul", "div", "power", "exp", "log", "clamp", "relu", "sigmoid",
    "logsigmoid", "softmax", "sum", "mean", "reshape", "transpose", "concat", "split", "stack",
    "getitem", "pad", "matmul", "conv1d", "conv2d", "maxpool1d", "maxpool2d", "global_avg_pool",
    "avg_pool2d", "batchnorm", "as_tensor",
]
