"""The full three-context model: input preparation, stream wiring, early-fusion head and losses."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .config import ModelConfig
from .context1 import (Context1, FaceStream, GaitStream, VectorStream, additive_fuse, multiplicative_fuse,
                       multiplicative_loss)
from .context2 import AttentionBranchNet
from .context3 import DepthCNN, ProximityGCN
from .data.schema import IMAGE_SIZE, Dataset
from .nn import Linear, Module
from .tensor import ShapeError, Tensor


@dataclass
class Inputs:
    """Model-ready arrays for a set of samples.

    Images are channel-first and average-pooled by ``image_pool`` (depth
    maps by ``depth_pool``); the image
    and depth arrays are ``None`` when their context is disabled.
    """

    face: np.ndarray
    gait: list[np.ndarray]
    image: np.ndarray | None
    depth: np.ndarray | None
    agents: list[np.ndarray]
    extras: dict[str, np.ndarray]
    labels: np.ndarray
    ids: list[str]
    groups: list[str]

    def __len__(self) -> int:
        return self.face.shape[0]

    def take(self, idx) -> "Inputs":
        idx = np.asarray(idx, dtype=np.int64)
        return Inputs(
            face=self.face[idx],
            gait=[self.gait[i] for i in idx],
            image=None if self.image is None else self.image[idx],
            depth=None if self.depth is None else self.depth[idx],
            agents=[self.agents[i] for i in idx],
            extras={k: v[idx] for k, v in self.extras.items()},
            labels=self.labels[idx],
            ids=[self.ids[i] for i in idx],
            groups=[self.groups[i] for i in idx],
        )

    def group_indices(self) -> list[np.ndarray]:
        """Sample indices per group, groups in first-appearance order."""
        order: dict[str, list[int]] = {}
        for i, g in enumerate(self.groups):
            order.setdefault(g, []).append(i)
        return [np.array(v, dtype=np.int64) for v in order.values()]


def _pool(x: np.ndarray, k: int) -> np.ndarray:
    if k == 1:
        return x
    h, w = x.shape[-2:]
    return x.reshape(x.shape[:-2] + (h // k, k, w // k, k)).mean(axis=(-3, -1))


def prepare_inputs(dataset: Dataset, config: ModelConfig) -> Inputs:
    dtype = np.dtype(config.dtype)
    n = len(dataset)
    side = IMAGE_SIZE // config.image_pool
    use2, use3 = 2 in config.enabled_contexts, 3 in config.enabled_contexts
    image = np.empty((n, 3, side, side), dtype) if use2 else None
    dside = IMAGE_SIZE // config.depth_pool
    depth = np.empty((n, dside, dside), dtype) if use3 and config.context3_mode == "depth" else None
    for i, s in enumerate(dataset.samples):
        if image is not None:
            image[i] = _pool(np.transpose(s.masked_image, (2, 0, 1)), config.image_pool)
        if depth is not None:
            depth[i] = _pool(s.depth, config.depth_pool)
    extras = {}
    for name, dim in config.extra_modalities:
        try:
            extras[name] = np.stack([s.extras[name] for s in dataset.samples]).astype(dtype) if n else \
                np.zeros((0, dim), dtype)
        except KeyError as e:
            raise ShapeError(f"dataset lacks extra modality {name!r}") from e
    return Inputs(
        face=np.stack([s.face for s in dataset.samples]).astype(dtype) if n else np.zeros((0, 144), dtype),
        gait=[s.gait.astype(dtype) for s in dataset.samples],
        image=image,
        depth=depth,
        agents=[s.agents.astype(dtype) for s in dataset.samples],
        extras=extras,
        labels=dataset.labels().astype(dtype) if n else np.zeros((0, dataset.C), dtype),
        ids=[s.id for s in dataset.samples],
        groups=[s.group for s in dataset.samples],
    )


class FusionHead(Module):
    """Early fusion: concat of k context encodings -> linear kC->2C -> ReLU -> linear 2C->C."""

    def __init__(self, k: int, C: int, rng: np.random.Generator, dtype=np.float32):
        self.k = k
        self.C = C
        self.fc1 = Linear(k * C, 2 * C, rng, dtype)
        self.fc2 = Linear(2 * C, C, rng, dtype)

    def zero_(self) -> "FusionHead":
        self.fc1.zero_()
        self.fc2.zero_()
        return self

    def logits(self, hs) -> Tensor:
        if len(hs) != self.k or any(h is None for h in hs):
            raise ShapeError(f"fusion head expects {self.k} context encodings, got "
                             f"{sum(h is not None for h in hs)}")
        for h in hs:
            if h.ndim != 2 or h.shape[1] != self.C:
                raise ShapeError(f"context encoding must be (N, {self.C}), got {h.shape}")
        x = hs[0] if self.k == 1 else ops.concat(list(hs), axis=1)
        return self.fc2(ops.relu(self.fc1(x)))


def fuse_heads(hs, head: FusionHead) -> Tensor:
    """Per-class sigmoid scores in (0, 1) from the enabled context encodings."""
    return ops.sigmoid(head.logits(hs))


def classification_loss(logits, targets) -> Tensor:
    """Multi-label soft-margin loss, averaged over classes and then over the batch."""
    x = ops.as_tensor(logits)
    y = np.asarray(targets, dtype=x.dtype)
    if y.shape != x.shape:
        raise ShapeError(f"targets {y.shape} do not match logits {x.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("targets must be 0 or 1")
    if not np.all(np.isfinite(x.data)):
        raise ValueError("logits must be finite")
    terms = ops.add(ops.mul(ops.logsigmoid(x), y), ops.mul(ops.logsigmoid(ops.neg(x)), 1.0 - y))
    return ops.neg(ops.mean(terms))


def total_loss(l_mult, l_class, config: ModelConfig) -> Tensor:
    if config.lambda1 < 0 or config.lambda2 < 0:
        raise ValueError("lambda1 and lambda2 must be non-negative")
    return ops.add(ops.mul(ops.as_tensor(l_mult), config.lambda1), ops.mul(ops.as_tensor(l_class), config.lambda2))


@dataclass
class ForwardResult:
    logits: Tensor
    modality_probs: list[Tensor]
    encodings: dict[int, Tensor]
    attention: Tensor | None = None
    branch_logits: Tensor | None = None
    extras: dict = field(default_factory=dict)

    @property
    def scores(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.logits.data.astype(np.float64)))


class EmotionModel(Module):
    """Context 1 always; context 2 (masked background) and context 3 (depth or proximity graph) per config."""

    def __init__(self, config: ModelConfig):
        config.validate()
        self.config = config
        dtype = np.dtype(config.dtype).type
        rng = np.random.default_rng(config.seed)
        C = config.C
        streams = [
            FaceStream(C, rng, config.face_conv, config.face_fc, dtype=dtype),
            GaitStream(C, rng, config.gait_channels, dtype=dtype),
        ]
        streams += [VectorStream(C, dim, rng, config.extra_width, dtype) for _, dim in config.extra_modalities]
        self.context1 = Context1(streams, C, rng, config.fusion, dtype)
        self.context2 = AttentionBranchNet(C, rng, config.abn_channels, dtype=dtype) \
            if 2 in config.enabled_contexts else None
        self.context3 = None
        if 3 in config.enabled_contexts:
            if config.context3_mode == "depth":
                self.context3 = DepthCNN(C, rng, config.depth_channels, config.depth_hidden,
                                         IMAGE_SIZE // config.depth_pool, config.depth_scale, dtype)
            else:
                self.context3 = ProximityGCN(C, rng, config.gcn_widths, config.gcn_hidden, config.mu, dtype)
        self.head = FusionHead(len(config.enabled_contexts), C, rng, dtype)

    def _gait(self, gaits: list[np.ndarray]) -> tuple[Tensor, Tensor]:
        # sequences of equal length share one forward pass
        stream = self.context1.streams[1]
        by_len: dict[int, list[int]] = {}
        for i, g in enumerate(gaits):
            by_len.setdefault(g.shape[0], []).append(i)
        if len(by_len) == 1:
            return stream(np.stack(gaits))
        fs, ps, order = [], [], []
        for idx in by_len.values():
            f, p = stream(np.stack([gaits[i] for i in idx]))
            fs.append(f)
            ps.append(p)
            order.extend(idx)
        inv = np.argsort(np.array(order), kind="stable")
        return ops.getitem(ops.concat(fs, 0), inv), ops.getitem(ops.concat(ps, 0), inv)

    def forward(self, inputs: Inputs, attention_override=None) -> ForwardResult:
        if len(inputs) == 0:
            raise ShapeError("empty batch")
        c1 = self.context1
        feats, probs = [], []
        f, p = c1.streams[0](inputs.face)
        feats.append(f)
        probs.append(p)
        f, p = self._gait(inputs.gait)
        feats.append(f)
        probs.append(p)
        for (name, _), stream in zip(self.config.extra_modalities, c1.streams[2:]):
            f, p = stream(inputs.extras[name])
            feats.append(f)
            probs.append(p)
        fuse = multiplicative_fuse if c1.fusion == "multiplicative" else additive_fuse
        enc = {1: fuse(feats, c1.projections)}
        attention = branch = None
        if self.context2 is not None:
            enc[2], attention, branch = self.context2(inputs.image, attention_override)
        if self.context3 is not None:
            enc[3] = self.context3(inputs.depth) if self.config.context3_mode == "depth" \
                else self.context3(inputs.agents)
        logits = self.head.logits([enc[k] for k in self.config.enabled_contexts])
        return ForwardResult(logits, probs, enc, attention, branch)

    __call__ = forward

    def losses(self, out: ForwardResult, labels: np.ndarray) -> dict[str, Tensor]:
        l_mult = multiplicative_loss(out.modality_probs, labels, self.config.beta)
        l_class = classification_loss(out.logits, labels)
        total = total_loss(l_mult, l_class, self.config)
        if self.config.abn_aux_loss and out.branch_logits is not None:
            total = ops.add(total, classification_loss(out.branch_logits, labels))
        return {"l_mult": l_mult, "l_class": l_class, "l_total": total}


def count_ops(t: Tensor) -> int:
    """Number of recorded primitive ops reachable from ``t``; a proxy for forward cost."""
    seen, stack, n = set(), [t], 0
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if node._parents:
            n += 1
            stack.extend(node._parents)
    return n
