"""Average precision and evaluation reports."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np


def average_precision(scores, labels) -> float:
    """Mean of precision@k over the ranks k of the positives.

    Samples are ranked by descending score; ties keep input order.  Raises
    ``ValueError`` when there are no positives.
    """
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores for {y.size} labels")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("average precision is undefined without positives")
    order = np.argsort(-s, kind="stable")
    hits = y[order].astype(np.float64)
    precision = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float((precision * hits).sum() / n_pos)


def per_class_ap(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """AP per column; NaN (with a warning) for classes that have no positives."""
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    out = np.full(scores.shape[1], np.nan)
    for c in range(scores.shape[1]):
        if labels[:, c].sum() == 0:
            warnings.warn(f"class {c} has no positives; skipped from mAP", RuntimeWarning, stacklevel=2)
            continue
        out[c] = average_precision(scores[:, c], labels[:, c])
    return out


def mean_ap(aps) -> float:
    aps = np.asarray(aps, dtype=np.float64)
    valid = aps[~np.isnan(aps)]
    return float(valid.mean()) if valid.size else math.nan


def chance_map(labels: np.ndarray) -> float:
    """Expected mAP of an uninformative ranker: the mean positive prevalence."""
    prev = np.asarray(labels, dtype=np.float64).mean(axis=0)
    return float(prev[prev > 0].mean())


@dataclass
class EvalReport:
    class_names: tuple[str, ...]
    per_class_ap: np.ndarray
    map: float
    variant: str
    n_samples: int

    @classmethod
    def from_scores(cls, scores, labels, class_names, variant: str) -> "EvalReport":
        aps = per_class_ap(scores, labels)
        return cls(tuple(class_names), aps, mean_ap(aps), variant, int(np.asarray(scores).shape[0]))

    def to_dict(self) -> dict:
        def clean(v):
            return None if math.isnan(v) else round(float(v), 10)
        return {
            "variant": self.variant,
            "n_samples": self.n_samples,
            "map": clean(self.map),
            "per_class_ap": {n: clean(a) for n, a in zip(self.class_names, self.per_class_ap)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "ap"])
        for n, a in zip(self.class_names, self.per_class_ap):
            w.writerow([n, "" if math.isnan(a) else f"{a:.6f}"])
        w.writerow(["mAP", "" if math.isnan(self.map) else f"{self.map:.6f}"])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        names = tuple(d["per_class_ap"])
        aps = np.array([math.nan if v is None else v for v in d["per_class_ap"].values()])
        return cls(names, aps, math.nan if d["map"] is None else d["map"], d["variant"], d["n_samples"])


def ablation_table(reports: list[EvalReport]) -> str:
    """CSV with one row per class and one column per variant, plus a final mAP row."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class"] + [r.variant for r in reports])
    names = reports[0].class_names if reports else ()
    for c, n in enumerate(names):
        w.writerow([n] + ["" if math.isnan(r.per_class_ap[c]) else f"{r.per_class_ap[c]:.6f}" for r in reports])
    w.writerow(["mAP"] + [f"{r.map:.6f}" for r in reports])
    return buf.getvalue()
