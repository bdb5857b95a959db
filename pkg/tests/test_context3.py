"""Proximity adjacency, the depth CNN and the proximity GCN."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import instances
from ctxemo import ops
from ctxemo.context1 import normalize_adjacency
from ctxemo.context3 import DepthCNN, ProximityGCN, build_adjacency
from ctxemo.gradcheck import grad_check
from ctxemo.tensor import ShapeError, no_grad

F64 = np.float64


# -- adjacency --------------------------------------------------------------

def test_coincident_agents_fully_connected():
    A = build_adjacency(np.zeros((3, 2)), 1.0)
    assert np.all(A == 1.0)


def test_distance_at_threshold_is_cut():
    A = build_adjacency(np.array([[0.0, 0.0], [2.0, 0.0]]), 2.0)
    np.testing.assert_array_equal(A, np.eye(2))


def test_unit_distance_weight():
    A = build_adjacency(np.array([[0.0, 0.0], [0.6, 0.8]]), 2.0)
    assert A[0, 1] == pytest.approx(math.exp(-1), abs=1e-5)
    assert A[0, 1] == pytest.approx(0.36788, abs=1e-5)


def test_adjacency_properties_on_random_sets(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        X = rng.uniform(-4, 4, (n, 2))
        mu = float(rng.uniform(0.5, 5.0))
        A = build_adjacency(X, mu)
        d = np.linalg.norm(X[:, None] - X[None], axis=-1)
        assert np.array_equal(A, A.T)
        assert np.all(np.diag(A) == 1.0)
        assert np.all(A[d >= mu] == 0)
        assert np.all((A[d < mu] > 0) & (A[d < mu] <= 1))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_weight_decreases_with_distance(d1, d2):
    A = build_adjacency(np.array([[0, 0], [d1, 0], [0, d2]], float), 100.0)
    if d1 < d2:
        assert A[0, 1] >= A[0, 2]


@pytest.mark.parametrize("X", [np.zeros((0, 2)), np.zeros((3, 3)), np.zeros(4)])
def test_adjacency_rejects_bad_shapes(X):
    with pytest.raises(ShapeError):
        build_adjacency(X, 1.0)


def test_adjacency_rejects_nan_and_bad_mu():
    with pytest.raises(ValueError):
        build_adjacency(np.array([[np.nan, 0.0]]), 1.0)
    with pytest.raises(ValueError):
        build_adjacency(np.zeros((2, 2)), 0.0)


# -- depth CNN ---------------------------------------------------------------

def _depth_net(rng, **kw):
    return DepthCNN(3, rng, (2, 3, 3, 4, 4), hidden=8, input_size=32, dtype=F64, **kw)


def test_zero_final_linear_gives_bias(rng):
    net = _depth_net(rng)
    net.fc2.weight.data[...] = 0
    net.fc2.bias.data[...] = [0.1, -0.2, 0.3]
    h3 = net(np.full((2, 32, 32), 5.0))
    np.testing.assert_allclose(h3.data, [[0.1, -0.2, 0.3]] * 2)


def test_depth_scaling_changes_encoding(rng):
    net = _depth_net(rng)
    d = rng.uniform(1, 20, (1, 32, 32))
    with no_grad():
        assert not np.allclose(net(d).data, net(2 * d).data)


def test_depth_accepts_channel_axis(rng):
    net = _depth_net(rng)
    d = rng.uniform(1, 20, (2, 32, 32))
    np.testing.assert_array_equal(net(d).data, net(d[:, None]).data)


def test_depth_rejects_negative(rng):
    with pytest.raises(ValueError):
        _depth_net(rng)(np.full((1, 32, 32), -1.0))


def test_depth_rejects_small_input(rng):
    with pytest.raises(ValueError):
        DepthCNN(3, rng, (2, 2, 2, 2, 2), hidden=4, input_size=16)


@pytest.mark.parametrize("seed", range(5))
def test_depth_gradients(seed):
    assert instances.check("depth", seed) < 1e-4


# -- proximity GCN -----------------------------------------------------------

def test_single_agent_reduces_to_mlp(rng):
    net = ProximityGCN(3, rng, (4, 5), hidden=6, dtype=F64)
    X = rng.standard_normal((1, 2))
    h = X
    for w in net.weights:
        h = np.maximum(h @ w.data, 0)
    expected = np.maximum(h @ net.fc1.weight.data + net.fc1.bias.data, 0) @ net.fc2.weight.data + net.fc2.bias.data
    np.testing.assert_allclose(net([X]).data, expected, rtol=1e-12)


def test_gcn_permutation_invariant(rng):
    net = ProximityGCN(4, rng, (8, 8), hidden=10)
    X = rng.uniform(-2, 2, (6, 2)).astype(np.float32)
    with no_grad():
        a = net([X]).data
        b = net([X[rng.permutation(6)]]).data
    np.testing.assert_allclose(a, b, rtol=1e-6, atol=1e-6)


def test_gcn_separates_clusters_from_merged(rng):
    net = ProximityGCN(4, rng, (8, 8), hidden=10, mu=3.0, dtype=F64)
    apart = np.array([[0, 0], [0.5, 0], [10, 0], [10.5, 0]], float)
    merged = np.array([[0, 0], [0.5, 0], [1.0, 0], [1.5, 0]], float)
    assert not np.allclose(net([apart]).data, net([merged]).data)


def test_isolated_agents_use_identity():
    X = np.array([[0.0, 0.0], [50.0, 0.0], [0.0, 50.0]])
    np.testing.assert_array_equal(normalize_adjacency(build_adjacency(X, 3.0), add_self_loops=False), np.eye(3))


def test_gcn_batches_graphs_of_different_sizes(rng):
    net = ProximityGCN(3, rng, (4, 4), hidden=5)
    out = net([rng.standard_normal((1, 2)), rng.standard_normal((4, 2))])
    assert out.shape == (2, 3)


def test_gcn_rejects_empty_batch(rng):
    with pytest.raises(ShapeError):
        ProximityGCN(3, rng)([])


@pytest.mark.parametrize("seed", range(5))
def test_gcn_gradients(seed):
    assert instances.check("gcn", seed) < 1e-4


def test_gcn_weight_gradients(rng):
    # gradient w.r.t. the first graph-conv weight, positions fixed
    net = ProximityGCN(2, rng, (3, 4), hidden=5, dtype=F64)
    X = rng.uniform(-1, 1, (4, 2))
    adj = normalize_adjacency(build_adjacency(X, 3.0), add_self_loops=False)

    def f(w):
        h = ops.relu(ops.matmul(ops.matmul(ops.as_tensor(adj), ops.as_tensor(X)), w))
        h = ops.relu(ops.matmul(ops.matmul(ops.as_tensor(adj), h), net.weights[1]))
        return ops.sum(ops.mul(ops.mean(h, axis=0), np.arange(1.0, 5.0)))
    assert grad_check(f, net.weights[0].data) < 1e-4
