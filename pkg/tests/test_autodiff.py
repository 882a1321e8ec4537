import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from emberline.autodiff import DualVector, lift_constant, lift_parameter, value_of

finite = st.floats(-5, 5, allow_nan=False)


def test_lift_constant():
    d = lift_constant(3.5)
    assert d.value == 3.5 and np.array_equal(d.grad, np.zeros(6))


def test_zero_is_additive_identity():
    x = lift_parameter(2, 1.7)
    y = x + lift_constant(0.0)
    assert y.value == x.value and np.array_equal(y.grad, x.grad)


def test_constant_times_parameter():
    out = lift_constant(2.5) * lift_parameter(3, 4.0)
    assert out.value == 10.0
    assert np.array_equal(out.grad, 2.5 * np.eye(6)[3])


def test_lift_parameter():
    d = lift_parameter(0, 0.3)
    assert d.value == 0.3 and np.array_equal(d.grad, [1, 0, 0, 0, 0, 0])
    with pytest.raises(IndexError):
        lift_parameter(6, 1.0)
    with pytest.raises(IndexError):
        lift_parameter(-1, 1.0)


@given(finite, st.integers(0, 5))
def test_exp_chain_rule(x, i):
    out = np.exp(lift_parameter(i, x))
    assert out.grad[i] == pytest.approx(math.exp(x), rel=1e-12)


def test_cos_at_zero():
    out = np.cos(lift_parameter(1, 0.0))
    assert out.value == 1.0 and out.grad[1] == 0.0


@given(finite, finite)
def test_elementary_derivatives(a, b):
    x = lift_parameter(0, a)
    y = lift_parameter(1, b)
    assert (x * y).grad[:2] == pytest.approx([b, a])
    assert (x - y).grad[:2] == pytest.approx([1, -1])
    assert np.sin(x).grad[0] == pytest.approx(math.cos(a))
    assert np.cos(x).grad[0] == pytest.approx(-math.sin(a))
    if abs(b) > 1e-3:
        q = x / y
        assert q.grad[:2] == pytest.approx([1 / b, -a / b**2], rel=1e-9)
    if a > 1e-3:
        assert np.log(x).grad[0] == pytest.approx(1 / a)


def test_division_by_zero_dual_is_error():
    with pytest.raises(ZeroDivisionError):
        lift_constant(1.0) / lift_parameter(0, 0.0)


def test_min_max_branch_convention():
    a, b = lift_parameter(0, 2.0), lift_parameter(1, 3.0)
    assert np.minimum(a, b).grad[0] == 1.0 and np.minimum(a, b).grad[1] == 0.0
    assert np.maximum(a, b).grad[1] == 1.0
    tie_a, tie_b = lift_parameter(0, 1.0), lift_parameter(1, 1.0)
    assert np.minimum(tie_a, tie_b).grad[0] == 1.0 and np.minimum(tie_a, tie_b).grad[1] == 0.0
    assert np.maximum(tie_b, tie_a).grad[1] == 1.0 and np.maximum(tie_b, tie_a).grad[0] == 0.0


def test_comparisons_use_value():
    a = lift_parameter(0, 1.0)
    assert a < 2.0 and a > 0.5 and not a > 1.0
    assert bool(a >= lift_parameter(1, 1.0))


def test_unsupported_operation_raises():
    with pytest.raises(TypeError):
        np.arccosh(lift_parameter(0, 2.0))


@given(finite, finite, finite, finite)
def test_linearity_is_exact(a, b, x, y):
    f = np.exp(lift_parameter(0, x) * 0.5)
    g = np.sin(lift_parameter(1, y))
    combo = lift_constant(a) * f + lift_constant(b) * g
    assert np.array_equal(combo.grad, a * f.grad + b * g.grad)


def test_array_valued_duals():
    x = DualVector(np.array([1.0, 2.0, 3.0]), np.zeros((6, 3)))
    x = x + lift_parameter(2, 0.5)
    s = np.sum(x * x)
    assert s.value == pytest.approx(sum((v + 0.5) ** 2 for v in (1, 2, 3)))
    assert s.grad[2] == pytest.approx(sum(2 * (v + 0.5) for v in (1, 2, 3)))
    m = np.mean(x, axis=0)
    assert m.value == pytest.approx(2.5) and m.grad[2] == pytest.approx(1.0)


def test_pad_and_stack():
    x = DualVector(np.ones((2, 2)), np.ones((6, 2, 2)))
    p = np.pad(x, 1)
    assert p.shape == (4, 4) and p.grad.shape == (6, 4, 4) and p.grad[0, 0, 0] == 0.0
    s = np.stack([x, np.zeros((2, 2))])
    assert s.shape == (2, 2, 2) and np.all(s.grad[:, 1] == 0)


@given(st.floats(0.1, 3), st.floats(-2, 2))
def test_composite_matches_finite_difference(x0, y0):
    def f(x, y):
        return np.exp(x) * np.cos(y) / (1.0 + x) + np.log(x) * y

    out = f(lift_parameter(0, x0), lift_parameter(1, y0))
    h = 1e-6
    fdx = (f(x0 + h, y0) - f(x0 - h, y0)) / (2 * h)
    fdy = (f(x0, y0 + h) - f(x0, y0 - h)) / (2 * h)
    assert out.grad[0] == pytest.approx(fdx, rel=1e-6, abs=1e-8)
    assert out.grad[1] == pytest.approx(fdy, rel=1e-6, abs=1e-8)
    assert value_of(out) == pytest.approx(f(x0, y0))
