"""Model and training configuration."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

CONTEXT3_MODES = ("depth", "gcn")
FUSIONS = ("multiplicative", "additive")


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    """Every knob of the model, the losses and the training loop.

    The defaults are the full reference architecture.  :meth:`desk` keeps the
    training hyper-parameters but shrinks widths and pools the image and depth
    inputs, so that training fits on a single CPU core.
    """

    C: int = 26
    beta: float = 0.1
    lambda1: float = 1.0
    lambda2: float = 1.0
    mu: float = 3.0
    context3_mode: str = "depth"
    enabled_contexts: tuple[int, ...] = (1, 2, 3)
    fusion: str = "multiplicative"
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 75
    seed: int = 0
    dtype: str = "float32"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # input handling
    image_pool: int = 1
    depth_pool: int = 1
    depth_scale: float = 10.0
    # widths
    face_conv: tuple[int, ...] = (64, 128, 256)
    face_fc: tuple[int, ...] = (256, 128, 64)
    gait_channels: tuple[int, ...] = (32, 64, 64)
    extra_modalities: tuple[tuple[str, int], ...] = ()
    extra_width: int = 64
    abn_channels: tuple[int, ...] = (16, 32, 64, 64)
    abn_aux_loss: bool = False
    depth_channels: tuple[int, ...] = (16, 32, 64, 128, 256)
    depth_hidden: int = 1000
    gcn_widths: tuple[int, ...] = (32, 64)
    gcn_hidden: int = 100
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("enabled_contexts", "face_conv", "face_fc", "gait_channels", "abn_channels",
                     "depth_channels", "gcn_widths"):
            setattr(self, name, tuple(int(v) for v in getattr(self, name)))
        self.extra_modalities = tuple((str(n), int(d)) for n, d in self.extra_modalities)
        self.enabled_contexts = tuple(sorted(set(self.enabled_contexts)))

    def validate(self) -> "ModelConfig":
        if self.C < 1:
            raise ConfigError("C must be >= 1")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be non-negative")
        if 1 not in self.enabled_contexts or not set(self.enabled_contexts) <= {1, 2, 3}:
            raise ConfigError(f"enabled_contexts must be a subset of {{1, 2, 3}} containing 1, "
                              f"got {self.enabled_contexts}")
        if self.context3_mode not in CONTEXT3_MODES:
            raise ConfigError(f"context3_mode must be one of {CONTEXT3_MODES}")
        if self.fusion not in FUSIONS:
            raise ConfigError(f"fusion must be one of {FUSIONS}")
        if self.beta < 0:
            raise ConfigError("beta must be non-negative")
        if self.mu <= 0:
            raise ConfigError("mu must be positive")
        if self.lr < 0 or self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("lr >= 0, batch_size >= 1 and epochs >= 0 required")
        if self.image_pool < 1 or 224 % self.image_pool:
            raise ConfigError("image_pool must divide 224")
        if self.depth_pool < 1 or 224 % self.depth_pool:
            raise ConfigError("depth_pool must divide 224")
        if len(self.depth_channels) != 5:
            raise ConfigError("the depth CNN has exactly five conv/pool stages")
        if len(self.gcn_widths) != 2:
            raise ConfigError("the proximity GCN has exactly two graph-conv layers")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        return self

    @property
    def n_modalities(self) -> int:
        return 2 + len(self.extra_modalities)

    def variant_tag(self) -> str:
        ctx = "".join(str(c) for c in self.enabled_contexts)
        return f"ctx{ctx}-{self.context3_mode}" if 3 in self.enabled_contexts else f"ctx{ctx}"

    def replace(self, **kw) -> "ModelConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = [list(x) if isinstance(x, tuple) else x for x in v]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def reference(cls, **kw) -> "ModelConfig":
        return cls(**kw)

    @classmethod
    def desk(cls, **kw) -> "ModelConfig":
        base = dict(
            image_pool=4,
            # 224 / 7 = 32 halves cleanly to 1x1 through the five depth pools
            depth_pool=7,
            face_conv=(16, 32, 32),
            face_fc=(64, 64, 64),
            gait_channels=(16, 32, 64),
            abn_channels=(8, 16, 32),
            depth_channels=(4, 8, 16, 16, 32),
        )
        base.update(kw)
        return cls(**base)

    @classmethod
    def preset(cls, name: str, **kw) -> "ModelConfig":
        if name == "desk":
            return cls.desk(**kw)
        if name == "reference":
            return cls.reference(**kw)
        raise ConfigError(f"unknown preset {name!r}")
