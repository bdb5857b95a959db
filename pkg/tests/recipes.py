"""Training recipes shared by the unit and acceptance tests."""

import copy

import numpy as np

from ctxemo.config import ModelConfig
from ctxemo.data import LabelVocabulary, SignalPlan, synthesize_dataset
from ctxemo.training import train

# desk runs that have to finish in seconds use a larger step than the 1e-4 default
FAST_LR = 3e-3
OVERFIT_LOSS = 0.05
ABLATION_EPOCHS = 30
ABLATION_TRAIN, ABLATION_TEST = 512, 128
NOISE_STRENGTH = 3.0


class _Stop(Exception):
    pass


def overfit_dataset(seed=0):
    """32 single-label samples whose cues show exactly the true class."""
    return synthesize_dataset(seed, 32, LabelVocabulary.generic(4), SignalPlan(second_label_rate=0.0, false_rate=0.0))


def train_to_overfit(seed=0, max_epochs=500, **kw):
    """Trains on :func:`overfit_dataset` until the total loss drops below 0.05; returns the loss history."""
    cfg = ModelConfig.desk(C=4, epochs=max_epochs, seed=seed, **kw)
    history = []

    def stop_when_fit(row):
        history.append(row["l_total"])
        if row["l_total"] < OVERFIT_LOSS:
            raise _Stop

    try:
        train(overfit_dataset(seed), cfg, on_epoch=stop_when_fit)
    except _Stop:
        pass
    return history


def ablation_split(seed):
    ds = synthesize_dataset(seed, ABLATION_TRAIN + ABLATION_TEST, LabelVocabulary.generic(4), SignalPlan())
    return ds.subset(range(ABLATION_TRAIN)), ds.subset(range(ABLATION_TRAIN, len(ds)))


def ablation_config(seed, **kw):
    return ModelConfig.desk(C=4, epochs=ABLATION_EPOCHS, lr=FAST_LR, seed=seed, **kw)


def corrupt(inputs, modality, seed, strength=NOISE_STRENGTH):
    """Copy of ``inputs`` with Gaussian noise of ``strength`` per-coordinate standard deviations on one modality."""
    rng = np.random.default_rng([seed, 7])
    out = copy.copy(inputs)
    if modality == "face":
        x = inputs.face
        out.face = (x + strength * x.std(axis=0) * rng.standard_normal(x.shape)).astype(x.dtype)
    elif modality == "gait":
        x = np.stack(inputs.gait)
        noisy = (x + strength * x.std(axis=0) * rng.standard_normal(x.shape)).astype(x.dtype)
        out.gait = list(noisy)
    else:
        raise ValueError(modality)
    return out
