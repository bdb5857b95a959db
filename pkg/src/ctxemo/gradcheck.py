"""Central-difference gradient checking."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import ShapeError, Tensor, no_grad


def numeric_grad(f: Callable[[Tensor], Tensor], point: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    x = np.array(point, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = f(Tensor(x.copy())).item()
            flat[i] = orig - eps
            fm = f(Tensor(x.copy())).item()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def grad_check(f: Callable[[Tensor], Tensor], point, eps: float = 1e-6) -> float:
    """Max relative error between the analytic and central-difference gradient of ``f`` at ``point``.

    Per coordinate the error is ``|a - n| / max(1e-12, |a| + |n|)``.  ``f``
    must map a float64 tensor to a scalar tensor.
    """
    x0 = np.array(point.data if isinstance(point, Tensor) else point, dtype=np.float64)
    x = Tensor(x0.copy(), requires_grad=True)
    out = f(x)
    if out.size != 1:
        raise ShapeError(f"grad_check needs a scalar function, got output shape {out.shape}")
    if out.requires_grad:
        out.backward()
    analytic = x.grad if x.grad is not None else np.zeros_like(x0)
    numeric = numeric_grad(f, x0, eps)
    denom = np.maximum(1e-12, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom)) if x0.size else 0.0
