"""Training loop, prediction, evaluation, ablations and checkpoints."""

from __future__ import annotations

import json
import os
import shutil
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .config import ModelConfig
from .data.schema import Dataset
from .fileio import read_emt1, write_emt1
from .metrics import EvalReport
from .model import EmotionModel, Inputs, prepare_inputs
from .optim import Adam
from .tensor import NonFiniteError, no_grad

LOSS_COLUMNS = ("epoch", "l_mult", "l_class", "l_total")


class DivergenceError(RuntimeError):
    def __init__(self, message: str, batch_id: str):
        super().__init__(f"{message} (batch {batch_id})")
        self.batch_id = batch_id


class CheckpointError(RuntimeError):
    pass


@dataclass
class TrainResult:
    model: EmotionModel
    history: list[dict] = field(default_factory=list)

    def loss_csv(self) -> str:
        lines = [",".join(LOSS_COLUMNS)]
        for row in self.history:
            lines.append(f"{row['epoch']},{row['l_mult']:.8f},{row['l_class']:.8f},{row['l_total']:.8f}")
        return "\n".join(lines) + "\n"


def batches(groups: list[np.ndarray], batch_size: int, rng: np.random.Generator):
    """Shuffled batches of whole groups (agents for video data)."""
    perm = rng.permutation(len(groups))
    for b, start in enumerate(range(0, len(perm), batch_size)):
        yield b, np.concatenate([groups[i] for i in perm[start:start + batch_size]])


def train(dataset: Dataset | Inputs, config: ModelConfig, model: EmotionModel | None = None,
          on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Adam on ``lambda1 * l_mult + lambda2 * l_class``.

    Deterministic for a fixed config: initialisation uses ``seed`` and batch
    order ``[seed, 2]``.  A non-finite loss or gradient raises
    :class:`DivergenceError` naming the epoch and batch.
    """
    config.validate()
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    data = dataset if isinstance(dataset, Inputs) else prepare_inputs(dataset, config)
    if data.labels.shape[1] != config.C:
        raise ValueError(f"dataset has {data.labels.shape[1]} classes, config expects {config.C}")
    if np.any(data.labels.sum(axis=1) < 1):
        raise ValueError("every training sample needs at least one positive label")
    model = model or EmotionModel(config)
    model.train()
    opt = Adam(model.parameters(), config.lr, (config.adam_beta1, config.adam_beta2), config.adam_eps)
    rng = np.random.default_rng([config.seed, 2])
    groups = data.group_indices()
    result = TrainResult(model)
    for epoch in range(1, config.epochs + 1):
        sums = dict.fromkeys(LOSS_COLUMNS[1:], 0.0)
        for b, idx in batches(groups, config.batch_size, rng):
            batch_id = f"epoch {epoch} batch {b}"
            batch = data.take(idx)
            try:
                out = model.forward(batch)
                losses = model.losses(out, batch.labels)
            except NonFiniteError as e:
                raise DivergenceError(f"non-finite forward value: {e}", batch_id) from e
            total = losses["l_total"]
            if not np.isfinite(total.item()):
                raise DivergenceError("non-finite loss", batch_id)
            opt.zero_grad()
            total.backward()
            try:
                opt.step()
            except NonFiniteError as e:
                raise DivergenceError(f"non-finite gradient: {e}", batch_id) from e
            for k in sums:
                sums[k] += losses[k].item() * len(idx)
        row = {"epoch": epoch, **{k: v / len(data) for k, v in sums.items()}}
        result.history.append(row)
        if on_epoch is not None:
            on_epoch(row)
    model.eval()
    return result


def predict_scores(model: EmotionModel, data: Inputs, chunk: int = 64) -> np.ndarray:
    """Per-sample sigmoid scores in eval mode."""
    model.eval()
    out = []
    with no_grad():
        for start in range(0, len(data), chunk):
            idx = np.arange(start, min(start + chunk, len(data)))
            out.append(model.forward(data.take(idx)).scores)
    return np.concatenate(out) if out else np.zeros((0, model.config.C))


def predict_video(frame_scores: Sequence) -> np.ndarray:
    """Arithmetic mean of per-frame score vectors."""
    if len(frame_scores) == 0:
        raise ValueError("predict_video needs at least one frame")
    return np.mean(np.asarray(frame_scores, dtype=np.float64), axis=0)


def predict_dataset(model: EmotionModel, dataset: Dataset | Inputs) -> tuple[list[str], np.ndarray, np.ndarray]:
    """``(ids, scores, labels)``; video datasets collapse to one row per agent."""
    data = dataset if isinstance(dataset, Inputs) else prepare_inputs(dataset, model.config)
    scores = predict_scores(model, data)
    ids, rows, labels = [], [], []
    for idx in data.group_indices():
        ids.append(data.groups[idx[0]])
        rows.append(predict_video(scores[idx]))
        labels.append(data.labels[idx[0]])
    C = model.config.C
    return ids, np.array(rows).reshape(-1, C), np.array(labels).reshape(-1, C)


def evaluate(model: EmotionModel, dataset: Dataset | Inputs, class_names: Sequence[str]) -> EvalReport:
    if len(class_names) != model.config.C:
        raise ValueError(f"checkpoint has C={model.config.C} but the dataset has {len(class_names)} classes")
    _, scores, labels = predict_dataset(model, dataset)
    return EvalReport.from_scores(scores, labels, class_names, model.config.variant_tag())


DEFAULT_VARIANTS = ((1,), (1, 2), (1, 3), (1, 2, 3))


def ablation_run(train_set: Dataset, test_set: Dataset, config: ModelConfig,
                 variants: Sequence[Sequence[int]] = DEFAULT_VARIANTS) -> list[EvalReport]:
    """Train and evaluate one model per context subset, sharing seed and split."""
    for v in variants:
        if 1 not in v:
            raise ValueError(f"variant {tuple(v)} does not contain context 1")
    names = train_set.vocabulary.names
    reports = []
    for v in variants:
        cfg = config.replace(enabled_contexts=tuple(v))
        model = train(train_set, cfg).model
        reports.append(evaluate(model, test_set, names))
    return reports


# checkpoints ---------------------------------------------------------------

def save_checkpoint(model: EmotionModel, path, class_names: Sequence[str] | None = None,
                    force: bool = False) -> None:
    """Directory of EMT1 tensors plus ``index.json`` (file map, config and class names)."""
    path = os.fspath(path)
    if os.path.exists(os.path.join(path, "index.json")):
        if not force:
            raise CheckpointError(f"checkpoint exists at {path}; pass force to overwrite")
        shutil.rmtree(os.path.join(path, "tensors"), ignore_errors=True)
    os.makedirs(os.path.join(path, "tensors"), exist_ok=True)
    index = {"parameters": {}, "buffers": {}}
    for kind, items in (("parameters", model.named_parameters()), ("buffers", model.named_buffers())):
        for name, val in items:
            rel = f"tensors/{name}.emt1"
            write_emt1(os.path.join(path, rel), val.data if kind == "parameters" else val)
            index[kind][name] = rel
    index["config"] = model.config.to_dict()
    index["class_names"] = list(class_names) if class_names is not None else None
    with open(os.path.join(path, "index.json"), "w") as f:
        json.dump(index, f, indent=1, sort_keys=True)
        f.write("\n")


def load_checkpoint(path) -> tuple[EmotionModel, list[str] | None]:
    path = os.fspath(path)
    try:
        with open(os.path.join(path, "index.json")) as f:
            index = json.load(f)
    except FileNotFoundError as e:
        raise CheckpointError(f"no checkpoint at {path}") from e
    model = EmotionModel(ModelConfig.from_dict(index["config"]))
    state = {name: read_emt1(os.path.join(path, rel))
             for kind in ("parameters", "buffers") for name, rel in index[kind].items()}
    model.load_state_dict(state)
    model.eval()
    return model, index.get("class_names")
