"""Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import NonFiniteError, ShapeError, Tensor


@dataclass
class AdamState:
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``.

    A ``None`` gradient is treated as zero.
    """
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} params but {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise ShapeError("optimizer state does not match parameter list")
    cleaned = []
    for p, g, m in zip(params, grads, state.m):
        g = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=p.dtype)
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeError(f"gradient/state shape mismatch for parameter of shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient passed to adam_step")
        cleaned.append(g)

    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, cleaned, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        if lr:
            p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state, self.lr,
                  self.betas[0], self.betas[1], self.eps)
