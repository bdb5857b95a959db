"""Per-agent label aggregation from raw annotator categories."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .schema import LabelVocabulary, UnknownLabelError

RAW_LABELS = (
    "Somewhat Happy", "Extremely Happy",
    "Somewhat Sad", "Extremely Sad",
    "Somewhat Angry", "Extremely Angry",
    "Neutral",
)
_MAJOR = {"Happy": "Happy", "Sad": "Sad", "Angry": "Angry", "Neutral": "Neutral"}


@dataclass(frozen=True)
class AnnotationRecord:
    agent_id: str
    annotator_id: str
    raw_label: str

    def __post_init__(self):
        if self.raw_label not in RAW_LABELS:
            raise UnknownLabelError(f"unknown raw label {self.raw_label!r}", self.agent_id)


def _major_and_weight(raw: str) -> tuple[str, int]:
    if raw == "Neutral":
        return "Neutral", 1
    degree, major = raw.split(" ", 1)
    return _MAJOR[major], 2 if degree == "Extremely" else 1


def annotation_scores(records: Iterable[AnnotationRecord],
                      vocabulary: LabelVocabulary | None = None) -> dict[str, np.ndarray]:
    """Summed per-agent scores: +2 for an "Extremely" variant, +1 otherwise."""
    vocab = vocabulary or LabelVocabulary.groupwalk()
    scores: dict[str, np.ndarray] = {}
    for r in records:
        if r.raw_label not in RAW_LABELS:
            raise UnknownLabelError(f"unknown raw label {r.raw_label!r}", r.agent_id)
        major, weight = _major_and_weight(r.raw_label)
        row = scores.setdefault(r.agent_id, np.zeros(vocab.C, dtype=np.int64))
        row[vocab.index(major)] += weight
    return scores


def aggregate_annotations(records: Iterable[AnnotationRecord], vocabulary: LabelVocabulary | None = None,
                          threshold: float = 0.5) -> dict[str, np.ndarray]:
    """Multi-hot label per agent: class on iff its score reaches ``threshold`` x the agent's max score."""
    records = list(records)
    if not records:
        raise ValueError("no annotation records")
    out = {}
    for agent, row in annotation_scores(records, vocabulary).items():
        out[agent] = (row >= threshold * row.max()).astype(np.int64)
    return out
