"""Tensor engine: forward values, backward rules, grad_check and Adam."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctxemo import ops
from ctxemo.gradcheck import grad_check, numeric_grad
from ctxemo.nn import BatchNorm
from ctxemo.optim import Adam, AdamState, adam_step
from ctxemo.tensor import GraphError, NonFiniteError, ShapeError, Tensor, no_grad, parameter
import instances

TOL = 1e-4


def _weights(rng, shape):
    return rng.standard_normal(shape)


# -- forward examples -------------------------------------------------------

def test_relu_values():
    assert ops.relu(Tensor(np.array([-1.0, 0.0, 2.0]))).data.tolist() == [0.0, 0.0, 2.0]


def test_softmax_symmetric_pair():
    np.testing.assert_allclose(ops.softmax(Tensor(np.zeros(2)), axis=0).data, [0.5, 0.5])


def test_softmax_empty_axis_rejected():
    with pytest.raises(ShapeError):
        ops.softmax(Tensor(np.zeros((3, 0))), axis=1)


def test_conv2d_identity_kernel(rng):
    x = rng.standard_normal((2, 1, 5, 6))
    w = np.ones((1, 1, 1, 1))
    np.testing.assert_array_equal(ops.conv2d(Tensor(x), Tensor(w)).data, x)


def test_forward_nonfinite_raises():
    with pytest.raises(NonFiniteError):
        ops.log(Tensor(np.array([0.0, 1.0])))
    with pytest.raises(NonFiniteError):
        ops.exp(Tensor(np.array([1000.0])))


def test_shape_mismatch_raises():
    with pytest.raises(ShapeError):
        ops.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 3))))
    with pytest.raises(ShapeError):
        ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


# -- backward examples ------------------------------------------------------

def test_sum_gradient_is_ones(rng):
    x = parameter(rng.standard_normal((3, 4, 2)))
    ops.sum(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones((3, 4, 2)))


def test_square_gradient():
    x = parameter(np.array([3.0]))
    ops.sum(ops.mul(x, x)).backward()
    assert x.grad.tolist() == [6.0]


def test_backward_needs_scalar(rng):
    x = parameter(rng.standard_normal(3))
    with pytest.raises(ShapeError):
        ops.mul(x, 2.0).backward()


def test_graph_freed_after_backward(rng):
    x = parameter(rng.standard_normal(3))
    y = ops.sum(ops.mul(x, x))
    y.backward()
    with pytest.raises(GraphError):
        y.backward()


def test_gradients_accumulate_with_retained_graph(rng):
    x = parameter(rng.standard_normal(4))
    y = ops.sum(ops.mul(x, x))
    y.backward(retain_graph=True)
    first = x.grad.copy()
    y.backward()
    np.testing.assert_allclose(x.grad, 2 * first)


def test_no_grad_records_nothing(rng):
    x = parameter(rng.standard_normal(3))
    with no_grad():
        y = ops.mul(x, 2.0)
    assert not y.requires_grad and y.is_leaf


def test_mlp_matches_finite_differences(rng):
    W1, W2, W3 = (rng.standard_normal(s) for s in ((4, 6), (6, 5), (5, 1)))
    x0 = rng.standard_normal((3, 4))

    def f(x):
        h = ops.relu(ops.matmul(x, Tensor(W1)))
        h = ops.sigmoid(ops.matmul(h, Tensor(W2)))
        return ops.sum(ops.matmul(h, Tensor(W3)))

    x = parameter(x0.copy())
    f(x).backward()
    np.testing.assert_allclose(x.grad, numeric_grad(f, x0, 1e-5), rtol=1e-6, atol=1e-8)


def test_gradient_linearity(rng):
    x0 = rng.standard_normal((4, 3))

    def l1(x):
        return ops.sum(ops.mul(ops.sigmoid(x), x))

    def l2(x):
        return ops.mean(ops.exp(ops.mul(x, 0.3)))

    grads = []
    for f in (l1, l2, lambda x: ops.add(l1(x), l2(x))):
        x = parameter(x0.copy())
        f(x).backward()
        grads.append(x.grad)
    np.testing.assert_allclose(grads[0] + grads[1], grads[2], atol=1e-9)


# -- grad_check -------------------------------------------------------------

def test_grad_check_sum_of_squares(rng):
    assert grad_check(lambda x: ops.sum(ops.mul(x, x)), rng.standard_normal(6)) < 1e-7


def test_grad_check_constant_is_zero(rng):
    assert grad_check(lambda x: Tensor(np.array(3.0)), rng.standard_normal(4)) == 0.0


def test_grad_check_rejects_vector_output(rng):
    with pytest.raises(ShapeError):
        grad_check(lambda x: ops.mul(x, 2.0), rng.standard_normal(3))


def test_grad_check_conv_relu_pool_stack(rng):
    w = rng.standard_normal((3, 2, 3, 3))
    proj = rng.standard_normal((1, 3, 2, 2))

    def f(x):
        h = ops.maxpool2d(ops.relu(ops.conv2d(x, Tensor(w), padding=1)), 2)
        return ops.sum(ops.mul(h, proj))

    assert grad_check(f, rng.standard_normal((1, 2, 4, 4))) < TOL


@pytest.mark.parametrize("instance", range(5))
def test_every_primitive_passes_grad_check(instance):
    rng = np.random.default_rng(100 + instance)
    for name, f, point in instances.primitive_cases(rng):
        err = grad_check(f, point)
        assert err < TOL, f"{name}: relative error {err:.2e}"


# -- properties ---------------------------------------------------------------

finite = st.floats(-30, 30, allow_nan=False, width=64)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=finite))
def test_softmax_normalised_and_positive(x):
    p = ops.softmax(Tensor(x), axis=1).data
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(p > 0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=4), st.integers(1, 3))
def test_concat_then_split_roundtrip(sizes, width):
    rng = np.random.default_rng(sum(sizes))
    parts = [rng.standard_normal((n, width)) for n in sizes]
    back = ops.split(ops.concat([Tensor(p) for p in parts], axis=0), sizes, axis=0)
    for p, q in zip(parts, back):
        np.testing.assert_array_equal(p, q.data)


def test_batchnorm_eval_is_deterministic(rng):
    bn = BatchNorm(3, np.float64)
    bn(Tensor(rng.standard_normal((8, 3))))
    bn.eval()
    x = Tensor(rng.standard_normal((5, 3)))
    a, b = bn(x).data, bn(x).data
    assert a.tobytes() == b.tobytes()


def test_batchnorm_train_updates_running_stats(rng):
    bn = BatchNorm(2, np.float64)
    x = rng.standard_normal((50, 2)) * 3 + 1
    bn(Tensor(x))
    np.testing.assert_allclose(bn.running_mean, 0.1 * x.mean(axis=0))


# -- Adam -------------------------------------------------------------------

def test_adam_zero_gradient_keeps_params():
    p = parameter(np.array([1.0, -2.0]))
    state = AdamState()
    adam_step([p], [np.array([1.0, 1.0])], state, 0.1)
    before = p.data.copy()
    m_before = state.m[0].copy()
    adam_step([p], [np.zeros(2)], state, 0.0)
    np.testing.assert_array_equal(p.data, before)
    assert np.all(np.abs(state.m[0]) < np.abs(m_before))


def test_adam_zero_gradient_from_fresh_state():
    p = parameter(np.array([0.5]))
    adam_step([p], [np.zeros(1)], AdamState(), 0.1)
    assert p.data.tolist() == [0.5]


def test_adam_first_step_is_lr():
    # m_hat = g and v_hat = g^2 after bias correction, so the step is lr * g / (|g| + eps)
    p = parameter(np.array([0.0]))
    adam_step([p], [np.array([1.0])], AdamState(), 1e-3)
    np.testing.assert_allclose(p.data, [-1e-3], rtol=1e-6)


def test_adam_quadratic_bowl():
    w = parameter(np.array([1.0]))
    opt = Adam([w], lr=0.1)
    losses = []
    for _ in range(200):
        loss = ops.sum(ops.mul(w, w))
        losses.append(loss.item())
        opt.zero_grad()
        loss.backward()
        opt.step()
    assert abs(w.data[0]) < 1e-2
    assert losses[-1] < losses[0]


def test_adam_rejects_bad_gradients():
    p = parameter(np.zeros(2))
    with pytest.raises(ShapeError):
        adam_step([p], [np.zeros(3)], AdamState(), 0.1)
    with pytest.raises(NonFiniteError):
        adam_step([p], [np.array([np.nan, 0.0])], AdamState(), 0.1)
