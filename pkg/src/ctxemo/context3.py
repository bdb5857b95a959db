"""Context 3: socio-dynamic context from a depth map or from an agent proximity graph."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import ops
from .context1 import normalize_adjacency
from .nn import Conv2d, Linear, Module, glorot
from .tensor import ShapeError, Tensor, parameter


def build_adjacency(X: np.ndarray, mu: float) -> np.ndarray:
    """``A[i, j] = exp(-d(i, j))`` where the Euclidean distance ``d < mu``, else 0."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] != 2:
        raise ShapeError(f"positions must be n x 2 with n >= 1, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite agent positions")
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    diff = X[:, None, :] - X[None, :, :]
    d = np.sqrt((diff**2).sum(axis=-1))
    return np.where(d < mu, np.exp(-d), 0.0)


class DepthCNN(Module):
    """Five conv3x3+ReLU / maxpool2 stages then linear -> ``hidden`` -> ReLU -> linear -> C."""

    def __init__(self, C: int, rng: np.random.Generator, channels=(16, 32, 64, 128, 256), hidden: int = 1000,
                 input_size: int = 224, depth_scale: float = 10.0, dtype=np.float32):
        chans = (1,) + tuple(channels)
        self.convs = [Conv2d(a, b, 3, rng, dtype) for a, b in zip(chans[:-1], chans[1:])]
        side = input_size
        for _ in self.convs:
            side //= 2
        if side < 1:
            raise ValueError(f"input size {input_size} too small for {len(self.convs)} pooling stages")
        self.fc1 = Linear(chans[-1] * side * side, hidden, rng, dtype)
        self.fc2 = Linear(hidden, C, rng, dtype)
        self.depth_scale = depth_scale

    def __call__(self, depth) -> Tensor:
        """``depth`` is (N, H, W) or (N, 1, H, W) of non-negative distances; returns h3 (N, C)."""
        x = ops.as_tensor(depth)
        if x.ndim == 3:
            x = ops.reshape(x, (x.shape[0], 1) + x.shape[1:])
        if x.ndim != 4 or x.shape[1] != 1:
            raise ShapeError(f"depth_stream: expected (N, H, W), got {x.shape}")
        if not np.all(np.isfinite(x.data)) or np.any(x.data < 0):
            raise ValueError("depth_stream: depth values must be finite and non-negative")
        h = ops.mul(x, 1.0 / self.depth_scale)
        for conv in self.convs:
            h = ops.maxpool2d(ops.relu(conv(h)), 2)
        h = ops.reshape(h, (h.shape[0], -1))
        return self.fc2(ops.relu(self.fc1(h)))


class ProximityGCN(Module):
    """Two graph-conv layers ``relu(Â H W)``, mean pool over agents, then linear -> hidden -> C."""

    def __init__(self, C: int, rng: np.random.Generator, widths=(32, 64), hidden: int = 100, mu: float = 3.0,
                 dtype=np.float32):
        chans = (2,) + tuple(widths)
        self.weights = [parameter(glorot(rng, (a, b), a, b, dtype)) for a, b in zip(chans[:-1], chans[1:])]
        self.fc1 = Linear(chans[-1], hidden, rng, dtype)
        self.fc2 = Linear(hidden, C, rng, dtype)
        self.mu = mu
        self.dtype = dtype

    def embed(self, X, adj_hat: np.ndarray | None = None) -> Tensor:
        """Pooled graph embedding (width[-1],) for one scene."""
        X = ops.as_tensor(X)
        if adj_hat is None:
            adj_hat = normalize_adjacency(build_adjacency(X.data, self.mu), add_self_loops=False)
        h = X
        adj = Tensor(adj_hat.astype(X.dtype))
        for w in self.weights:
            h = ops.relu(ops.matmul(ops.matmul(adj, h), w))
        return ops.mean(h, axis=0)

    def __call__(self, graphs: Sequence) -> Tensor:
        """``graphs`` is a list of n_i x 2 position arrays (one graph per sample); returns (N, C)."""
        if len(graphs) == 0:
            raise ShapeError("gcn_stream needs at least one graph")
        pooled = ops.stack([self.embed(X) for X in graphs], axis=0)
        return self.fc2(ops.relu(self.fc1(pooled)))
