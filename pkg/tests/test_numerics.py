import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aloft import numerics as nx
from aloft.errors import DimensionError, NumericError, ValidationError
from aloft.numerics import Parameter, Tensor, grad_check


def P(a, name="p", dtype=np.float64):
    return Parameter(np.asarray(a, dtype=dtype), name)


def weighted(y, seed=0):
    w = np.random.default_rng(seed).normal(size=y.shape).astype(y.dtype)
    return nx.tsum(nx.mul(y, w))


# linear -------------------------------------------------------------------

def test_linear_identity_map():
    y = nx.linear(np.array([[1.0, 0.0]]), P([[1, 0], [0, 1]]), P([0, 0]))
    assert np.array_equal(y.data, [[1.0, 0.0]])


def test_linear_sum_plus_bias():
    y = nx.linear(np.array([[1.0, 2.0]]), P([[1], [1]]), P([1]))
    assert np.array_equal(y.data, [[4.0]])


def test_linear_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(1, 3\).*\(2, 2\)"):
        nx.linear(np.ones((1, 3)), P(np.ones((2, 2))), P(np.zeros(2)))


@pytest.mark.parametrize("seed", range(10))
def test_linear_gradients_f32(seed):
    r = np.random.default_rng(seed)
    x, w, b = (P(r.normal(size=s), n, np.float32) for s, n in (((3, 4), "x"), ((4, 2), "w"), ((2,), "b")))
    rep = grad_check(lambda: weighted(nx.linear(x, w, b), seed), [x, w, b])
    assert rep.passed, rep


@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2**16))
@settings(max_examples=40, deadline=None)
def test_linear_is_linear_without_bias(a, b, seed):
    r = np.random.default_rng(seed)
    x1, x2, w = r.normal(size=(3, 4)), r.normal(size=(3, 4)), P(r.normal(size=(4, 5)))
    lhs = nx.linear(a * x1 + b * x2, w).data
    rhs = a * nx.linear(x1, w).data + b * nx.linear(x2, w).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


# layer norm ---------------------------------------------------------------

def test_layer_norm_constant_row_is_zero():
    y = nx.layer_norm(np.array([[3.0, 3.0, 3.0]]), P(np.ones(3)), P(np.zeros(3)))
    assert np.array_equal(y.data, np.zeros((1, 3)))


def test_layer_norm_already_standard():
    y = nx.layer_norm(np.array([[1.0, -1.0]]), P(np.ones(2)), P(np.zeros(2)), eps=1e-12)
    np.testing.assert_allclose(y.data, [[1.0, -1.0]], atol=1e-10)


def test_layer_norm_rejects_bad_eps_and_empty_channels():
    with pytest.raises(ValidationError):
        nx.layer_norm(np.ones((2, 3)), P(np.ones(3)), P(np.zeros(3)), eps=0.0)
    with pytest.raises(DimensionError):
        nx.layer_norm(np.ones((2, 0)), P(np.ones(0)), P(np.zeros(0)))


@given(arrays(np.float64, (4, 7), elements=st.floats(-50, 50)))
@settings(max_examples=50, deadline=None)
def test_layer_norm_moments(x):
    x = x + np.linspace(0, 1, 7)  # avoid exactly constant rows
    y = nx.layer_norm(x, P(np.ones(7)), P(np.zeros(7)), eps=1e-12).data
    np.testing.assert_allclose(y.mean(axis=-1), 0, atol=1e-8)
    np.testing.assert_allclose(y.var(axis=-1), 1, atol=1e-6)


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-3), (np.float64, 1e-6)])
def test_layer_norm_gradients(seed, dtype, tol):
    r = np.random.default_rng(seed)
    x, g, b = P(r.normal(size=(3, 5)), "x", dtype), P(r.normal(size=5), "g", dtype), P(r.normal(size=5), "b", dtype)
    rep = grad_check(lambda: weighted(nx.layer_norm(x, g, b), seed), [x, g, b])
    assert rep.passed and rep.tol == tol, rep


# gelu ---------------------------------------------------------------------

def test_gelu_fixed_points():
    assert nx.gelu(np.array([0.0])).data[0] == 0.0
    assert abs(nx.gelu(np.array([10.0])).data[0] - 10.0) < 1e-4
    assert abs(nx.gelu(np.array([-10.0])).data[0]) < 1e-4


def test_gelu_matches_tanh_formula(rng):
    x = rng.normal(size=100) * 3
    ref = 0.5 * x * (1 + np.tanh(math.sqrt(2 / math.pi) * (x + 0.044715 * x**3)))
    np.testing.assert_allclose(nx.gelu(x).data, ref, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_gelu_gradients(seed):
    x = P(np.random.default_rng(seed).normal(size=12) * 2, "x", np.float32)
    assert grad_check(lambda: weighted(nx.gelu(x), seed), [x]).passed


# cross entropy ------------------------------------------------------------

def test_cross_entropy_uniform():
    assert abs(nx.cross_entropy(np.array([[0.0, 0.0]]), [0]).item() - math.log(2)) < 1e-12


def test_cross_entropy_is_stable():
    v = nx.cross_entropy(np.array([[1000.0, 0.0]]), [0]).item()
    assert math.isfinite(v) and abs(v) < 1e-12


def test_cross_entropy_label_range():
    with pytest.raises(ValidationError):
        nx.cross_entropy(np.zeros((1, 2)), [2])
    with pytest.raises(ValidationError):
        nx.cross_entropy(np.zeros((1, 2)), [-1])


@pytest.mark.parametrize("seed", range(10))
def test_cross_entropy_gradients(seed):
    logits = P(np.random.default_rng(seed).normal(size=(2, 3)), "logits", np.float32)
    assert grad_check(lambda: nx.cross_entropy(logits, [1, 2]), [logits]).passed


# grad_check and tape -------------------------------------------------------

def test_grad_check_quadratic():
    p = P([3.0])
    rep = grad_check(lambda: nx.mul(p, p).sum(), [p])
    assert p.grad is not None and rep.max_rel_error < 1e-10
    p.zero_grad()
    nx.mul(p, p).sum().backward()
    assert p.grad[0] == 6.0


def test_grad_check_cross_entropy_of_linear_f32(rng):
    x = rng.normal(size=(4, 3)).astype(np.float32)
    w, b = P(rng.normal(size=(3, 5)), "w", np.float32), P(rng.normal(size=5), "b", np.float32)
    assert grad_check(lambda: nx.cross_entropy(nx.linear(x, w, b), [0, 1, 4, 2]), [w, b]).passed


def test_grad_check_rejects_bad_delta_and_non_finite():
    p = P([1.0])
    with pytest.raises(ValidationError):
        grad_check(lambda: p.sum(), [p], delta=0)
    q = P([np.inf])
    with pytest.raises(NumericError):
        grad_check(lambda: q.sum(), [q])


def test_backward_accumulates_and_shapes_match(rng):
    w = P(rng.normal(size=(3, 2)), "w")
    x = rng.normal(size=(4, 3))
    y = nx.add(nx.matmul(x, w), nx.matmul(x, w)).sum()
    y.backward()
    np.testing.assert_allclose(w.grad, 2 * x.T @ np.ones((4, 2)))
    assert w.grad.shape == w.shape


def test_topological_order_inputs_first(rng):
    a = P(rng.normal(size=3), "a")
    b = nx.mul(a, 2.0)
    c = nx.add(b, a)
    order = nx.topological_order(c.sum())
    pos = {id(t): i for i, t in enumerate(order)}
    for t in order:
        for parent in t.parents:
            if parent.requires_grad:
                assert pos[id(parent)] < pos[id(t)]


def test_no_grad_records_nothing():
    a = P([1.0, 2.0])
    with nx.no_grad():
        y = nx.mul(a, a)
    assert y.backward_fn is None and not y.requires_grad


def test_backward_needs_scalar_seed():
    with pytest.raises(ValidationError):
        nx.mul(P([1.0, 2.0]), 2.0).backward()


def test_determinism(rng):
    x = rng.normal(size=(8, 6)).astype(np.float32)
    w, b = P(rng.normal(size=(6, 6)), "w", np.float32), P(np.zeros(6), "b", np.float32)
    g, be = P(np.ones(6), "g", np.float32), P(np.zeros(6), "be", np.float32)
    run = lambda: nx.gelu(nx.layer_norm(nx.linear(x, w, b), g, be)).data
    assert np.array_equal(run(), run())


def test_tensor_is_plain_value():
    t = Tensor(np.arange(3.0))
    assert t.shape == (3,) and t.numpy() is t.data
