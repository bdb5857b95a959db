"""Context 2: background scene with the primary agent blanked out, encoded by an attention-branch CNN."""

from __future__ import annotations

import numpy as np

from . import ops
from .nn import Conv2d, Linear, Module
from .tensor import ShapeError, Tensor


def compute_mask(image: np.ndarray, bbox) -> np.ndarray:
    """Copy of ``image`` (H x W x Ch) with every pixel inside ``bbox`` set to 0.

    ``bbox`` is a :class:`~ctxemo.data.schema.BoundingBox` or an
    ``(x0, y0, x1, y1)`` tuple with exclusive upper bounds.
    """
    x0, y0, x1, y1 = (bbox.x0, bbox.y0, bbox.x1, bbox.y1) if hasattr(bbox, "x0") else bbox
    h, w = image.shape[:2]
    if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
        raise ValueError(f"degenerate or out-of-frame bounding box {(x0, y0, x1, y1)}")
    out = np.array(image, copy=True)
    out[y0:y1, x0:x1] = 0
    return out


class AttentionBranchNet(Module):
    """Conv backbone, a 1x1-conv attention branch and a gated perception branch.

    The backbone is ``len(channels)`` blocks of 3x3 conv, ReLU and 2x2 max
    pool.  The attention branch maps backbone features to ``C`` channels, then
    to a single sigmoid map ``M``.  The perception branch pools
    ``features * (1 + M)`` and projects to ``h2``.  Unit-range intensities
    are centred at 0.5 before the first convolution.
    """

    def __init__(self, C: int, rng: np.random.Generator, channels=(16, 32, 64, 64), in_channels: int = 3,
                 dtype=np.float32):
        chans = (in_channels,) + tuple(channels)
        self.blocks = [Conv2d(a, b, 3, rng, dtype) for a, b in zip(chans[:-1], chans[1:])]
        self.att_class = Conv2d(chans[-1], C, 1, rng, dtype)
        # zero start: an untrained attention map is uniformly sigmoid(0) = 0.5
        self.att_map = Conv2d(C, 1, 1, rng, dtype).zero_()
        self.out = Linear(chans[-1], C, rng, dtype)
        self.in_channels = in_channels

    def zero_heads(self) -> "AttentionBranchNet":
        self.att_class.zero_()
        self.att_map.zero_()
        self.out.zero_()
        return self

    def backbone(self, x: Tensor) -> Tensor:
        h = x
        for conv in self.blocks:
            h = ops.maxpool2d(ops.relu(conv(h)), 2)
        return h

    def __call__(self, image, attention_override: np.ndarray | None = None):
        """``image`` is (N, Ch, H, W).

        Returns ``(h2, attention (N, h, w), branch_logits (N, C))``; the
        branch logits feed the optional attention-branch loss.
        """
        x = ops.as_tensor(image)
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(f"abn: expected (N, {self.in_channels}, H, W), got {x.shape}")
        if not np.all(np.isfinite(x.data)):
            raise ValueError("abn: non-finite input")
        feat = self.backbone(ops.sub(x, 0.5))
        a = self.att_class(feat)
        branch_logits = ops.global_avg_pool(a)
        M = ops.sigmoid(self.att_map(a))                 # (N, 1, h, w)
        if attention_override is not None:
            M = Tensor(np.broadcast_to(np.asarray(attention_override, dtype=feat.dtype), M.shape).copy())
        gated = ops.mul(feat, ops.add(M, 1.0))
        h2 = self.out(ops.global_avg_pool(gated))
        n, _, hh, ww = M.shape
        return h2, ops.reshape(M, (n, hh, ww)), branch_logits


def upsample_nearest(m: np.ndarray, size: int) -> np.ndarray:
    """Nearest-neighbour upsampling of a square-ish map to ``size`` x ``size``."""
    h, w = m.shape
    rows = (np.arange(size) * h) // size
    cols = (np.arange(size) * w) // size
    return m[rows][:, cols]
