"""Label vocabularies, samples and datasets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FACE_DIM = 144
N_JOINTS = 25
IMAGE_SIZE = 224
IMAGE_CHANNELS = 3

EMOTIC_CLASSES = (
    "Affection", "Anger", "Annoyance", "Anticipation", "Aversion", "Confidence", "Disapproval",
    "Disconnection", "Disquietment", "Doubt/Confusion", "Embarrassment", "Engagement", "Esteem",
    "Excitement", "Fatigue", "Fear", "Happiness", "Pain", "Peace", "Pleasure", "Sadness",
    "Sensitivity", "Suffering", "Surprise", "Sympathy", "Yearning",
)
GROUPWALK_CLASSES = ("Angry", "Happy", "Neutral", "Sad")


class DatasetError(ValueError):
    """Invalid dataset content; ``sample_id`` names the offending sample when known."""

    def __init__(self, message: str, sample_id: str | None = None):
        self.sample_id = sample_id
        super().__init__(f"sample {sample_id!r}: {message}" if sample_id is not None else message)


class MissingFileError(DatasetError):
    pass


class ShapeMismatchError(DatasetError):
    pass


class UnknownLabelError(DatasetError):
    pass


class DuplicateIdError(DatasetError):
    pass


class InvalidLabelsError(DatasetError):
    pass


class NonFiniteInputError(DatasetError):
    pass


@dataclass(frozen=True)
class LabelVocabulary:
    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if len(set(names)) != len(names):
            raise ValueError("vocabulary names must be unique")
        if not names:
            raise ValueError("vocabulary needs at least one class")

    @property
    def C(self) -> int:
        return len(self.names)

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownLabelError(f"unknown label {name!r}") from None

    @classmethod
    def emotic(cls) -> "LabelVocabulary":
        return cls(EMOTIC_CLASSES)

    @classmethod
    def groupwalk(cls) -> "LabelVocabulary":
        return cls(GROUPWALK_CLASSES)

    @classmethod
    def generic(cls, n: int) -> "LabelVocabulary":
        if n < 1:
            raise ValueError("need at least one class")
        return cls(tuple(f"class{i}" for i in range(n)))

    @classmethod
    def preset(cls, name: str) -> "LabelVocabulary":
        presets = {"emotic": cls.emotic, "groupwalk": cls.groupwalk}
        if name not in presets:
            raise ValueError(f"unknown vocabulary preset {name!r}; choose from {sorted(presets)}")
        return presets[name]()


@dataclass(frozen=True)
class BoundingBox:
    """Pixel box, inclusive lower and exclusive upper bounds."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (0 <= self.x0 < self.x1 <= IMAGE_SIZE and 0 <= self.y0 < self.y1 <= IMAGE_SIZE):
            raise ValueError(f"invalid bounding box {self}")

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass
class Sample:
    """One annotated agent (or one frame of an agent, for video datasets)."""

    id: str
    face: np.ndarray
    gait: np.ndarray
    masked_image: np.ndarray
    depth: np.ndarray
    agents: np.ndarray
    labels: np.ndarray
    agent_id: str | None = None
    bbox: BoundingBox | None = None
    extras: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def group(self) -> str:
        return self.agent_id if self.agent_id is not None else self.id


def _finite(sid, name, arr):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInputError(f"{name} has non-finite values", sid)


def validate_sample(s: Sample, C: int, require_positive: bool = True) -> None:
    sid = s.id
    if np.shape(s.face) != (FACE_DIM,):
        raise ShapeMismatchError(f"face must have length {FACE_DIM}, got shape {np.shape(s.face)}", sid)
    g = np.shape(s.gait)
    if len(g) != 3 or g[0] < 1 or g[1:] != (N_JOINTS, 2):
        raise ShapeMismatchError(f"gait must be T x {N_JOINTS} x 2 with T >= 1, got {g}", sid)
    if np.shape(s.masked_image) != (IMAGE_SIZE, IMAGE_SIZE, IMAGE_CHANNELS):
        raise ShapeMismatchError(f"masked_image must be {IMAGE_SIZE}x{IMAGE_SIZE}x{IMAGE_CHANNELS}, "
                                 f"got {np.shape(s.masked_image)}", sid)
    if np.shape(s.depth) != (IMAGE_SIZE, IMAGE_SIZE):
        raise ShapeMismatchError(f"depth must be {IMAGE_SIZE}x{IMAGE_SIZE}, got {np.shape(s.depth)}", sid)
    a = np.shape(s.agents)
    if len(a) != 2 or a[0] < 1 or a[1] != 2:
        raise ShapeMismatchError(f"agents must be n x 2 with n >= 1, got {a}", sid)
    if np.shape(s.labels) != (C,):
        raise ShapeMismatchError(f"labels must have length {C}, got {np.shape(s.labels)}", sid)
    for name in ("face", "gait", "masked_image", "depth", "agents"):
        _finite(sid, name, getattr(s, name))
    for name, arr in s.extras.items():
        _finite(sid, f"extras[{name}]", arr)
    if np.any(s.depth < 0):
        raise DatasetError("depth values must be non-negative", sid)
    lab = np.asarray(s.labels)
    if not np.all((lab == 0) | (lab == 1)):
        raise InvalidLabelsError("labels must be 0/1", sid)
    if require_positive and lab.sum() < 1:
        raise InvalidLabelsError("labels need at least one active class", sid)


@dataclass(frozen=True)
class Dataset:
    vocabulary: LabelVocabulary
    samples: tuple[Sample, ...]
    kind: str = "image"

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.kind not in ("image", "video"):
            raise DatasetError(f"kind must be 'image' or 'video', got {self.kind!r}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def C(self) -> int:
        return self.vocabulary.C

    def validate(self, require_positive: bool = True) -> "Dataset":
        seen: set[str] = set()
        for s in self.samples:
            if s.id in seen:
                raise DuplicateIdError("duplicate sample id", s.id)
            seen.add(s.id)
            validate_sample(s, self.C, require_positive)
        return self

    def labels(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, self.C))
        return np.stack([s.labels for s in self.samples]).astype(np.float64)

    def groups(self) -> dict[str, list[int]]:
        """Sample indices per agent, in first-appearance order."""
        out: dict[str, list[int]] = {}
        for i, s in enumerate(self.samples):
            out.setdefault(s.group if self.kind == "video" else s.id, []).append(i)
        return out

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(self.vocabulary, tuple(self.samples[i] for i in indices), self.kind)

    def by_id(self, sample_id: str) -> Sample:
        for s in self.samples:
            if s.id == sample_id:
                return s
        raise KeyError(sample_id)

    def summary(self) -> dict:
        lab = self.labels()
        return {
            "samples": len(self),
            "agents": len(self.groups()),
            "classes": self.C,
            "kind": self.kind,
            "label_histogram": {n: int(c) for n, c in zip(self.vocabulary.names, lab.sum(axis=0))},
        }
