"""Training loop, checkpoints, evaluation and ablations."""

import numpy as np
import pytest

from ctxemo.config import ModelConfig
from ctxemo.data import LabelVocabulary, synthesize_dataset
from ctxemo.model import EmotionModel, prepare_inputs
from ctxemo.training import (CheckpointError, DivergenceError, ablation_run, batches, evaluate, load_checkpoint,
                             predict_dataset, predict_scores, save_checkpoint, train)
from recipes import FAST_LR, OVERFIT_LOSS, overfit_dataset

def small_config(**kw):
    base = dict(C=4, epochs=2, face_conv=(4, 4, 4), face_fc=(8, 8, 8), gait_channels=(4, 4, 4),
                abn_channels=(4, 4, 4), depth_channels=(2, 2, 2, 2, 4), depth_hidden=8)
    base.update(kw)
    return ModelConfig.desk(**base)


@pytest.fixture(scope="module")
def small_data():
    return synthesize_dataset(5, 24, LabelVocabulary.generic(4))


def _params(model):
    return {n: p.data.copy() for n, p in model.named_parameters()}


@pytest.fixture(scope="module")
def overfit_history():
    cfg = ModelConfig.desk(C=4, epochs=200, lr=FAST_LR)
    return np.array([r["l_total"] for r in train(overfit_dataset(), cfg).history])


# -- loop --------------------------------------------------------------------

def test_zero_learning_rate_keeps_parameters(small_data):
    cfg = small_config(lr=0.0)
    model = EmotionModel(cfg)
    before = _params(model)
    train(small_data, cfg, model=model)
    for name, value in _params(model).items():
        assert value.tobytes() == before[name].tobytes(), name


def test_same_seed_bit_identical(small_data):
    cfg = small_config()
    a, b = train(small_data, cfg), train(small_data, cfg)
    assert a.history == b.history
    pa, pb = _params(a.model), _params(b.model)
    assert all(pa[n].tobytes() == pb[n].tobytes() for n in pa)


def test_different_seed_differs(small_data):
    a = train(small_data, small_config(seed=0))
    b = train(small_data, small_config(seed=1))
    assert a.history != b.history


def test_history_columns(small_data):
    result = train(small_data, small_config(epochs=3))
    assert [r["epoch"] for r in result.history] == [1, 2, 3]
    header, *rows = result.loss_csv().splitlines()
    assert header == "epoch,l_mult,l_class,l_total"
    assert len(rows) == 3
    for r in result.history:
        assert r["l_total"] == pytest.approx(r["l_mult"] + r["l_class"], rel=1e-6)


def test_divergence_names_the_batch(small_data):
    cfg = small_config(dtype="float64")
    model = EmotionModel(cfg)
    model.head.fc2.weight.data[...] = 1e305
    model.head.fc1.weight.data[...] = 1e305
    with pytest.raises(DivergenceError, match="epoch 1 batch 0"):
        train(small_data, cfg, model=model)


def test_training_rejects_empty_and_mismatched(small_data):
    with pytest.raises(ValueError):
        train(small_data.subset([]), small_config())
    with pytest.raises(ValueError):
        train(small_data, small_config(C=5))


def test_video_batches_keep_agents_whole():
    ds = synthesize_dataset(2, 5, LabelVocabulary.groupwalk(), kind="video", frames_per_agent=3)
    data = prepare_inputs(ds, small_config(enabled_contexts=(1,)))
    groups = data.group_indices()
    for _, idx in batches(groups, 2, np.random.default_rng(0)):
        agents = {data.groups[i] for i in idx}
        assert sum(len(g) for g in groups if data.groups[g[0]] in agents) == len(idx)


def test_overfit_reaches_small_loss(overfit_history):
    assert overfit_history.min() < OVERFIT_LOSS


def test_overfit_loss_eventually_non_increasing(overfit_history):
    windows = overfit_history.reshape(-1, 10).mean(axis=1)
    tail = windows[len(windows) // 2:]
    assert np.all(np.diff(tail) <= 0)


# -- prediction and evaluation ------------------------------------------------

def test_video_scores_are_frame_means():
    ds = synthesize_dataset(2, 3, LabelVocabulary.groupwalk(), kind="video", frames_per_agent=4)
    cfg = small_config(enabled_contexts=(1,))
    model = train(ds, cfg).model
    data = prepare_inputs(ds, cfg)
    frame_scores = predict_scores(model, data)
    ids, scores, _ = predict_dataset(model, data)
    assert len(ids) == 3
    for k, idx in enumerate(data.group_indices()):
        np.testing.assert_allclose(scores[k], frame_scores[idx].mean(axis=0), rtol=1e-12)


def test_evaluation_independent_of_sample_order(small_data):
    model = train(small_data, small_config()).model
    perm = np.random.default_rng(0).permutation(len(small_data))
    a = evaluate(model, small_data, small_data.vocabulary.names)
    b = evaluate(model, small_data.subset(perm), small_data.vocabulary.names)
    assert a.map == b.map
    assert np.array_equal(a.per_class_ap, b.per_class_ap, equal_nan=True)


def test_evaluate_checks_class_count(small_data):
    model = EmotionModel(small_config())
    with pytest.raises(ValueError):
        evaluate(model, small_data, ("a", "b"))


def test_ablation_single_variant_matches_plain_run(small_data):
    train_set, test_set = small_data.subset(range(16)), small_data.subset(range(16, 24))
    cfg = small_config()
    [report] = ablation_run(train_set, test_set, cfg, [(1, 2, 3)])
    plain = evaluate(train(train_set, cfg).model, test_set, train_set.vocabulary.names)
    assert report.map == plain.map
    assert report.variant == plain.variant == "ctx123-depth"


def test_ablation_requires_context1(small_data):
    with pytest.raises(ValueError):
        ablation_run(small_data, small_data, small_config(), [(2, 3)])


# -- checkpoints -------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path, small_data):
    cfg = small_config()
    model = train(small_data, cfg).model
    save_checkpoint(model, tmp_path / "ckpt", small_data.vocabulary.names)
    loaded, names = load_checkpoint(tmp_path / "ckpt")
    assert tuple(names) == small_data.vocabulary.names
    assert loaded.config == model.config
    data = prepare_inputs(small_data, cfg)
    assert predict_scores(loaded, data).tobytes() == predict_scores(model, data).tobytes()


def test_checkpoint_refuses_overwrite(tmp_path, small_data):
    model = EmotionModel(small_config())
    save_checkpoint(model, tmp_path / "ckpt")
    with pytest.raises(CheckpointError):
        save_checkpoint(model, tmp_path / "ckpt")
    save_checkpoint(model, tmp_path / "ckpt", force=True)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nothing")


def test_zero_epochs_is_initialisation(tmp_path, small_data):
    cfg = small_config(epochs=0)
    trained = train(small_data, cfg).model
    fresh = EmotionModel(cfg)
    a, b = _params(trained), _params(fresh)
    assert all(a[n].tobytes() == b[n].tobytes() for n in a)
