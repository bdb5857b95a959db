"""JSON manifest plus EMT1 tensor files.

Layout on disk::

    manifest.json
    tensors/s00000_face.emt1, s00000_gait.emt1, ...

Manifest::

    {"vocabulary": [names], "kind": "image" | "video",
     "samples": [{"id", "face", "gait", "masked_image", "depth", "agents",
                  "labels": [0/1 ints] or [class names],
                  optional "agent_id", "bbox": [x0, y0, x1, y1], "extras": {name: path}}]}

All paths are relative to the manifest file.
"""

from __future__ import annotations

import json
import os

import numpy as np

from ..fileio import FormatError, read_emt1, write_emt1
from .schema import (
    BoundingBox,
    Dataset,
    DatasetError,
    DuplicateIdError,
    InvalidLabelsError,
    LabelVocabulary,
    MissingFileError,
    Sample,
    UnknownLabelError,
)

TENSOR_FIELDS = ("face", "gait", "masked_image", "depth", "agents")


def _read_tensor(base: str, rel, sid: str, name: str) -> np.ndarray:
    if not isinstance(rel, str):
        raise DatasetError(f"{name} must be a relative path string", sid)
    path = os.path.join(base, rel)
    if not os.path.isfile(path):
        raise MissingFileError(f"{name} file not found: {rel}", sid)
    try:
        return read_emt1(path)
    except FormatError as exc:
        raise DatasetError(f"{name}: {exc}", sid) from exc


def _parse_labels(raw, vocab: LabelVocabulary, sid: str) -> np.ndarray:
    if not isinstance(raw, list):
        raise InvalidLabelsError("labels must be a list", sid)
    if raw and all(isinstance(v, str) for v in raw):
        out = np.zeros(vocab.C, dtype=np.float32)
        for name in raw:
            try:
                out[vocab.index(name)] = 1
            except UnknownLabelError:
                raise UnknownLabelError(f"unknown label name {name!r}", sid) from None
        return out
    if any(isinstance(v, bool) or not isinstance(v, int) for v in raw):
        raise InvalidLabelsError("labels must be 0/1 integers or class names", sid)
    return np.asarray(raw, dtype=np.float32)


def load_dataset(manifest_path, require_positive: bool = True) -> Dataset:
    """Read and fully validate a manifest; errors name the offending sample."""
    manifest_path = os.fspath(manifest_path)
    if not os.path.isfile(manifest_path):
        raise MissingFileError(f"manifest not found: {manifest_path}")
    with open(manifest_path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("vocabulary"), list) or not isinstance(doc.get("samples"), list):
        raise DatasetError("manifest needs 'vocabulary' and 'samples' lists")
    try:
        vocab = LabelVocabulary(tuple(doc["vocabulary"]))
    except ValueError as exc:
        raise DatasetError(f"bad vocabulary: {exc}") from exc
    kind = doc.get("kind", "image")
    base = os.path.dirname(os.path.abspath(manifest_path))

    samples = []
    seen: set[str] = set()
    for entry in doc["samples"]:
        if not isinstance(entry, dict) or not isinstance(entry.get("id"), str):
            raise DatasetError("every sample needs a string 'id'")
        sid = entry["id"]
        if sid in seen:
            raise DuplicateIdError("duplicate sample id", sid)
        seen.add(sid)
        missing = [k for k in TENSOR_FIELDS + ("labels",) if k not in entry]
        if missing:
            raise DatasetError(f"missing fields {missing}", sid)
        arrays = {k: _read_tensor(base, entry[k], sid, k) for k in TENSOR_FIELDS}
        extras = {k: _read_tensor(base, v, sid, f"extras[{k}]") for k, v in entry.get("extras", {}).items()}
        bbox = None
        if entry.get("bbox") is not None:
            try:
                bbox = BoundingBox(*entry["bbox"])
            except (TypeError, ValueError) as exc:
                raise DatasetError(f"bad bbox: {exc}", sid) from None
        samples.append(Sample(id=sid, labels=_parse_labels(entry["labels"], vocab, sid),
                              agent_id=entry.get("agent_id"), bbox=bbox, extras=extras, **arrays))
    return Dataset(vocab, tuple(samples), kind).validate(require_positive)


def save_dataset(dataset: Dataset, manifest_path, dtype=np.float32) -> None:
    """Write ``manifest.json``-style file plus one EMT1 file per tensor, deterministically."""
    manifest_path = os.fspath(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    tdir = os.path.join(base, "tensors")
    os.makedirs(tdir, exist_ok=True)
    entries = []
    for i, s in enumerate(dataset.samples):
        entry: dict = {"id": s.id}
        for k in TENSOR_FIELDS:
            rel = f"tensors/s{i:05d}_{k}.emt1"
            write_emt1(os.path.join(base, rel), np.asarray(getattr(s, k), dtype=dtype))
            entry[k] = rel
        entry["labels"] = [int(v) for v in np.asarray(s.labels)]
        if s.agent_id is not None:
            entry["agent_id"] = s.agent_id
        if s.bbox is not None:
            entry["bbox"] = s.bbox.as_list()
        if s.extras:
            entry["extras"] = {}
            for k in sorted(s.extras):
                rel = f"tensors/s{i:05d}_x_{k}.emt1"
                write_emt1(os.path.join(base, rel), np.asarray(s.extras[k], dtype=dtype))
                entry["extras"][k] = rel
        entries.append(entry)
    doc = {"vocabulary": list(dataset.vocabulary.names), "kind": dataset.kind, "samples": entries}
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
