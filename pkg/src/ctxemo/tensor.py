"""Dense tensor with reverse-mode differentiation.

A :class:`Tensor` wraps a numpy array.  Operations on tensors that require
gradients record themselves on the output (parents plus a backward rule) and
receive a creation sequence number.  :meth:`Tensor.backward` collects the
reachable graph, sorts it by sequence number, and walks it once in reverse,
which is exactly the reverse of forward execution order.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
_seq = itertools.count()
_grad_enabled = True


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class GraphError(RuntimeError):
    pass


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op", "_seq", "_freed")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        arr = np.asarray(data.data if isinstance(data, Tensor) else data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in _DTYPES:
            arr = arr.astype(np.float32)
        if arr.dtype not in _DTYPES:
            raise TypeError(f"unsupported dtype {arr.dtype}; use float32 or float64")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._op: str | None = None
        self._seq = next(_seq)
        self._freed = False

    # -- introspection ---------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._op is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        tag = f", op={self._op}" if self._op else ""
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{rg}{tag})"

    # -- backward --------------------------------------------------------
    def backward(self, retain_graph: bool = False) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf that requires grad.

        Gradients accumulate across calls until :meth:`zero_grad`.  Unless
        ``retain_graph`` is set the graph is freed afterwards, and a second
        call on the same output raises :class:`GraphError`.
        """
        if self.data.size != 1 or self.data.ndim != 0 and self.data.shape != (1,):
            raise ShapeError(f"backward() needs a scalar output, got shape {self.shape}")
        if self._freed:
            raise GraphError("graph already freed; call backward(retain_graph=True) to keep it")
        if not self.requires_grad:
            return

        nodes: dict[int, Tensor] = {}
        stack = [self]
        while stack:
            t = stack.pop()
            if id(t) in nodes:
                continue
            nodes[id(t)] = t
            stack.extend(p for p in t._parents if p.requires_grad)
        order = sorted(nodes.values(), key=lambda t: t._seq, reverse=True)

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for t in order:
            g = grads.pop(id(t), None)
            if g is None:
                continue
            if t._op is None:
                t.grad = g.copy() if t.grad is None else t.grad + g
                continue
            if t._backward is None:
                raise GraphError("graph already freed; call backward(retain_graph=True) to keep it")
            for p, gp in zip(t._parents, t._backward(g)):
                if gp is None or not p.requires_grad:
                    continue
                if gp.shape != p.shape:
                    raise ShapeError(f"{t._op}: gradient shape {gp.shape} != input shape {p.shape}")
                key = id(p)
                grads[key] = gp if key not in grads else grads[key] + gp
            if not retain_graph:
                t._backward = None
                t._parents = ()
                t._freed = True


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else None))


def record(op: str, out: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    """Wrap a forward result, checking finiteness and recording the backward rule."""
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"{op}: non-finite value in forward result")
    t = Tensor(out)
    if _grad_enabled and any(p.requires_grad for p in parents):
        t.requires_grad = True
        t._parents = tuple(parents)
        t._backward = backward
        t._op = op
    return t


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)
