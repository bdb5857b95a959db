"""Layer containers built on the tensor primitives."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import ops
from .tensor import Tensor, parameter


def glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    """Parameter container.

    Parameters are Tensor attributes with ``requires_grad``; buffers are the
    numpy arrays named in ``_buffers``.  Sub-modules may sit in attributes or
    in lists.
    """

    training: bool = True
    _buffers: tuple[str, ...] = ()

    def children(self) -> Iterator[tuple[str, "Module"]]:
        for name, val in vars(self).items():
            if isinstance(val, Module):
                yield name, val
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                yield prefix + name, val
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Tensor) and item.requires_grad:
                        yield f"{prefix}{name}.{i}", item
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name in self._buffers:
            yield prefix + name, getattr(self, name)
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {k: p.data.copy() for k, p in self.named_parameters()}
        state.update({k: b.copy() for k, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise KeyError(f"state is missing entries: {sorted(missing)}")
        for k, p in params.items():
            if state[k].shape != p.shape:
                raise ValueError(f"{k}: shape {state[k].shape} != {p.shape}")
            p.data = np.array(state[k], dtype=p.dtype)
        for k, b in buffers.items():
            b[...] = state[k]


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32):
        self.weight = parameter(glorot(rng, (n_in, n_out), n_in, n_out, dtype))
        self.bias = parameter(np.zeros(n_out, dtype=dtype))

    def zero_(self) -> "Linear":
        self.weight.data[...] = 0
        self.bias.data[...] = 0
        return self

    def __call__(self, x: Tensor) -> Tensor:
        return ops.matmul(x, self.weight) + self.bias


class Conv1d(Module):
    """Stride-1 convolution with symmetric zero padding (``same`` for odd kernels)."""

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator, dtype=np.float32):
        self.kernel = kernel
        self.weight = parameter(glorot(rng, (c_out, c_in, kernel), c_in * kernel, c_out * kernel, dtype))
        self.bias = parameter(np.zeros(c_out, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv1d(x, self.weight, self.bias, padding=self.kernel // 2)


class Conv2d(Module):
    """Stride-1 square convolution with symmetric zero padding (``same`` for odd kernels)."""

    def __init__(self, c_in: int, c_out: int, kernel, rng: np.random.Generator, dtype=np.float32,
                 padding=None):
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        self.padding = (kh // 2, kw // 2) if padding is None else padding
        fan = kh * kw
        self.weight = parameter(glorot(rng, (c_out, c_in, kh, kw), c_in * fan, c_out * fan, dtype))
        self.bias = parameter(np.zeros(c_out, dtype=dtype))

    def zero_(self) -> "Conv2d":
        self.weight.data[...] = 0
        self.bias.data[...] = 0
        return self

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, padding=self.padding)


class BatchNorm(Module):
    _buffers = ("running_mean", "running_var")

    def __init__(self, channels: int, dtype=np.float32, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = parameter(np.ones(channels, dtype=dtype))
        self.beta = parameter(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ops.batchnorm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                             self.training, self.momentum, self.eps)
