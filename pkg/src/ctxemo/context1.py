"""Context 1: per-modality streams of the agent itself and their multiplicative fusion."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import ops
from .data.schema import FACE_DIM, N_JOINTS
from .nn import BatchNorm, Conv1d, Conv2d, Linear, Module, glorot
from .tensor import ShapeError, Tensor, parameter

PROB_FLOOR = 1e-7

# OpenPose BODY-25 bones
BODY25_EDGES = (
    (0, 1), (1, 2), (2, 3), (3, 4), (1, 5), (5, 6), (6, 7), (1, 8), (8, 9), (9, 10), (10, 11),
    (8, 12), (12, 13), (13, 14), (0, 15), (15, 17), (0, 16), (16, 18), (14, 19), (19, 20),
    (14, 21), (11, 22), (22, 23), (11, 24),
)


def body25_adjacency() -> np.ndarray:
    """Undirected 0/1 skeleton adjacency without self loops."""
    A = np.zeros((N_JOINTS, N_JOINTS))
    for i, j in BODY25_EDGES:
        A[i, j] = A[j, i] = 1.0
    return A


def normalize_adjacency(A: np.ndarray, add_self_loops: bool = True) -> np.ndarray:
    """``D^-1/2 (A [+ I]) D^-1/2``; a zero-degree node falls back to degree 1."""
    A = np.asarray(A, dtype=np.float64)
    if add_self_loops:
        A = A + np.eye(A.shape[0])
    deg = A.sum(axis=1)
    deg = np.where(deg > 0, deg, 1.0)
    d = 1.0 / np.sqrt(deg)
    return d[:, None] * A * d[None, :]


def _check_input(x: np.ndarray, dim: int, what: str) -> None:
    if x.ndim != 2 or x.shape[1] != dim:
        raise ShapeError(f"{what}: expected (N, {dim}), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{what}: non-finite input")


class FaceStream(Module):
    """Three conv1d+BN+ReLU stages, a max pool, three linear+BN+ReLU stages and a softmax head.

    A per-coordinate batch norm standardises the raw landmarks first, since
    class cues are small offsets on a large shared face layout.
    """

    def __init__(self, C: int, rng: np.random.Generator, conv_channels=(64, 128, 256),
                 fc_widths=(256, 128, 64), kernel: int = 3, pool: int = 2, dtype=np.float32,
                 in_dim: int = FACE_DIM):
        self.in_dim = in_dim
        self.pool = pool
        self.data_bn = BatchNorm(in_dim, dtype)
        chans = (1,) + tuple(conv_channels)
        self.convs = [Conv1d(a, b, kernel, rng, dtype) for a, b in zip(chans[:-1], chans[1:])]
        self.conv_bns = [BatchNorm(b, dtype) for b in chans[1:]]
        flat = chans[-1] * (in_dim // pool)
        widths = (flat,) + tuple(fc_widths)
        self.fcs = [Linear(a, b, rng, dtype) for a, b in zip(widths[:-1], widths[1:])]
        self.fc_bns = [BatchNorm(b, dtype) for b in widths[1:]]
        self.head = Linear(widths[-1], C, rng, dtype)

    @property
    def feature_dim(self) -> int:
        return self.fcs[-1].weight.shape[1]

    def features(self, face) -> Tensor:
        face = ops.as_tensor(face)
        _check_input(face.data, self.in_dim, "face_stream")
        n = face.shape[0]
        h = ops.reshape(self.data_bn(face), (n, 1, self.in_dim))
        for conv, bn in zip(self.convs, self.conv_bns):
            h = ops.relu(bn(conv(h)))
        h = ops.maxpool1d(h, self.pool)
        h = ops.reshape(h, (n, -1))
        for fc, bn in zip(self.fcs, self.fc_bns):
            h = ops.relu(bn(fc(h)))
        return h

    def __call__(self, face) -> tuple[Tensor, Tensor]:
        f = self.features(face)
        return f, ops.softmax(self.head(f), axis=-1)


class GaitStream(Module):
    """Spatial-temporal graph convolution over a BODY-25 skeleton sequence.

    Each sequence is first centred on its mean joint position and scaled by
    its RMS spread, then batch-normalised per coordinate.  Joint identity stays
    readable from position, which the shared-weight blocks and the final mean
    over joints rely on.  Each block applies ``relu(temporal_conv(Â H W))``;
    the temporal convolution pads by repeating the first and last frame, so a
    static pose gives the same features for any sequence length.
    """

    def __init__(self, C: int, rng: np.random.Generator, channels=(32, 64, 64), temporal_kernel: int = 3,
                 adjacency: np.ndarray | None = None, dtype=np.float32):
        A = body25_adjacency() if adjacency is None else np.asarray(adjacency, dtype=np.float64)
        self.n_joints = A.shape[0]
        self.adj_hat = normalize_adjacency(A).astype(dtype)
        self.kernel = temporal_kernel
        self.data_bn = BatchNorm(2, dtype)
        chans = (2,) + tuple(channels)
        self.spatial = [parameter(glorot(rng, (a, b), a, b, dtype)) for a, b in zip(chans[:-1], chans[1:])]
        self.temporal = [Conv2d(b, b, (temporal_kernel, 1), rng, dtype, padding=(0, 0)) for b in chans[1:]]
        self.head = Linear(chans[-1], C, rng, dtype)

    @property
    def feature_dim(self) -> int:
        return self.spatial[-1].shape[1]

    def features(self, gait) -> Tensor:
        gait = ops.as_tensor(gait)
        x = gait.data
        if x.ndim != 4 or x.shape[0] < 1 or x.shape[1] < 1 or x.shape[2:] != (self.n_joints, 2):
            raise ShapeError(f"gait_stream: expected (N, T, {self.n_joints}, 2), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("gait_stream: non-finite input")
        centred = ops.sub(gait, ops.mean(gait, axis=(1, 2), keepdims=True))
        spread = ops.power(ops.add(ops.mean(ops.mul(centred, centred), axis=(1, 2, 3), keepdims=True), 1e-6), 0.5)
        h = ops.div(centred, spread)
        h = ops.transpose(self.data_bn(ops.transpose(h, (0, 3, 1, 2))), (0, 2, 3, 1))   # (n, T, V, 2)
        adj = Tensor(self.adj_hat)
        half = self.kernel // 2
        for w, tconv in zip(self.spatial, self.temporal):
            h = ops.matmul(ops.matmul(adj, h), w)                      # (n, T, V, c)
            h = ops.transpose(h, (0, 3, 1, 2))                        # (n, c, T, V)
            h = ops.pad(h, [(0, 0), (0, 0), (half, half), (0, 0)], mode="edge")
            h = ops.relu(tconv(h))
            h = ops.transpose(h, (0, 2, 3, 1))                        # (n, T, V, c)
        return ops.mean(h, axis=(1, 2))

    def __call__(self, gait) -> tuple[Tensor, Tensor]:
        f = self.features(gait)
        return f, ops.softmax(self.head(f), axis=-1)


class VectorStream(Module):
    """Two-layer MLP stream for an additional vector modality."""

    def __init__(self, C: int, in_dim: int, rng: np.random.Generator, width: int = 64, dtype=np.float32):
        self.in_dim = in_dim
        self.fc1 = Linear(in_dim, width, rng, dtype)
        self.fc2 = Linear(width, width, rng, dtype)
        self.head = Linear(width, C, rng, dtype)

    @property
    def feature_dim(self) -> int:
        return self.fc2.weight.shape[1]

    def __call__(self, x) -> tuple[Tensor, Tensor]:
        x = ops.as_tensor(x)
        _check_input(x.data, self.in_dim, "vector_stream")
        f = ops.relu(self.fc2(ops.relu(self.fc1(x))))
        return f, ops.softmax(self.head(f), axis=-1)


def multiplicative_fuse(features: Sequence[Tensor], projections: Sequence[Linear]) -> Tensor:
    """Element-wise product of per-modality linear projections to class space."""
    if len(features) < 2:
        raise ShapeError(f"fusion needs at least two modalities, got {len(features)}")
    if len(projections) != len(features):
        raise ShapeError(f"{len(projections)} projections for {len(features)} modalities")
    h = projections[0](features[0])
    for f, proj in zip(features[1:], projections[1:]):
        h = ops.mul(h, proj(f))
    return h


def additive_fuse(features: Sequence[Tensor], projections: Sequence[Linear]) -> Tensor:
    """Sum of per-modality projections; the baseline the product fusion is compared to."""
    if len(features) < 2:
        raise ShapeError(f"fusion needs at least two modalities, got {len(features)}")
    if len(projections) != len(features):
        raise ShapeError(f"{len(projections)} projections for {len(features)} modalities")
    h = projections[0](features[0])
    for f, proj in zip(features[1:], projections[1:]):
        h = ops.add(h, proj(f))
    return h


def _active_mask(targets, C: int) -> np.ndarray:
    if isinstance(targets, (set, frozenset)):
        mask = np.zeros(C)
        mask[list(targets)] = 1
        return mask
    return np.asarray(targets, dtype=np.float64)


def multiplicative_loss(per_modality_probs, targets, beta: float) -> Tensor:
    """Confidence-weighted cross-entropy over modalities.

    ``-sum_i (p_i^e)^(beta/(n-1)) log p_i^e`` for each active class ``e``,
    averaged over the active classes and then over the batch.  Probabilities
    are floored at 1e-7 before the log.

    ``per_modality_probs`` is an (n, C) or (n, N, C) tensor, or a list of n
    tensors of shape (C,) or (N, C).  ``targets`` is a multi-hot (C,) or
    (N, C) array, or a set of active class indices for a single sample.
    """
    if isinstance(per_modality_probs, Tensor):
        P = per_modality_probs
    else:
        P = ops.stack([ops.as_tensor(p) for p in per_modality_probs], axis=0)
    n = P.shape[0]
    if n < 2:
        raise ShapeError(f"multiplicative loss needs n >= 2 modalities, got {n}")
    single = P.ndim == 2
    if single:
        P = ops.reshape(P, (n, 1, P.shape[1]))
    C = P.shape[-1]
    mask = _active_mask(targets, C)
    if mask.ndim == 1:
        mask = mask[None, :]
    if mask.shape != P.shape[1:]:
        raise ShapeError(f"targets shape {mask.shape} does not match probabilities {P.shape[1:]}")
    counts = mask.sum(axis=1)
    if np.any(counts < 1):
        raise ValueError("every sample needs at least one active class")
    P = ops.clamp(P, PROB_FLOOR, 1.0)
    weight = ops.power(P, beta / (n - 1))
    terms = ops.mul(ops.mul(weight, ops.log(P)), (mask / counts[:, None]).astype(P.dtype))
    per_sample = ops.neg(ops.sum(terms, axis=(0, 2)))
    return ops.mean(per_sample)


class Context1(Module):
    """Face, gait and optional extra vector streams fused into h1."""

    def __init__(self, streams: Sequence[Module], C: int, rng: np.random.Generator, fusion: str = "multiplicative",
                 dtype=np.float32):
        if len(streams) < 2:
            raise ShapeError("context 1 needs at least two modality streams")
        if fusion not in ("multiplicative", "additive"):
            raise ValueError(f"unknown fusion {fusion!r}")
        self.streams = list(streams)
        self.fusion = fusion
        self.projections = [Linear(s.feature_dim, C, rng, dtype) for s in self.streams]
        if fusion == "multiplicative":
            # unit biases start the product near 1 + sum of projections instead of at the a*b = 0 saddle
            for proj in self.projections:
                proj.bias.data[...] = 1.0

    @property
    def n_modalities(self) -> int:
        return len(self.streams)

    def __call__(self, inputs: Sequence) -> tuple[Tensor, list[Tensor]]:
        if len(inputs) != len(self.streams):
            raise ShapeError(f"{len(inputs)} inputs for {len(self.streams)} streams")
        feats, probs = [], []
        for stream, x in zip(self.streams, inputs):
            f, p = stream(x)
            feats.append(f)
            probs.append(p)
        fuse = multiplicative_fuse if self.fusion == "multiplicative" else additive_fuse
        return fuse(feats, self.projections), probs
