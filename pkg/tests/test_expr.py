import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffinv import expr
from diffinv.errors import ExpressionError


@pytest.mark.parametrize("src,x,want", [
    ("1", 5.0, 1.0),
    ("x", 2.5, 2.5),
    ("2*x + 1", 3.0, 7.0),
    ("x^2", 3.0, 9.0),
    ("-x^2", 3.0, -9.0),
    ("2^3^2", 0.0, 512.0),
    ("(1 + x) / (x - 1)", 3.0, 2.0),
    ("exp(x)", 1.0, math.e),
    ("log(x)", math.e, 1.0),
    ("sqrt(x)", 4.0, 2.0),
    ("sinh(x) + cosh(x)", 0.7, math.exp(0.7)),
    ("tanh(x) * coth(x)", 0.3, 1.0),
    ("1.5e-1 * x", 2.0, 0.3),
    ("+x", 1.25, 1.25),
])
def test_evaluation(src, x, want):
    assert expr.evaluate(src, x) == pytest.approx(want, rel=1e-14)


def test_constants_and_arrays():
    e = expr.parse("mu * coth(mu * x)", {"mu": 2.0})
    xs = np.array([0.1, 1.0, 3.0])
    np.testing.assert_allclose(e(xs), 2.0 / np.tanh(2.0 * xs), rtol=1e-15)
    assert e(np.array(1.0)).shape == ()
    assert str(e) == "mu * coth(mu * x)"


def test_constant_expression_broadcasts():
    e = expr.parse("2")
    assert e(np.zeros(4)).shape == (4,)


@pytest.mark.parametrize("src", [
    "", "   ", "x ** 2", "y + 1", "foo(x)", "exp(x, 2)", "x[0]", "x if x else 1",
    "import os", "__import__('os')", "x; 1", "lambda: 1", "exp", "1 +", "x == 1", "True",
    "x.real", "'a'",
])
def test_rejected(src):
    with pytest.raises(ExpressionError):
        expr.parse(src)


def test_reserved_constant_names():
    with pytest.raises(ExpressionError):
        expr.parse("x", {"x": 1.0})
    with pytest.raises(ExpressionError):
        expr.parse("exp", {"exp": 1.0})


def test_finite_probe():
    assert expr.is_finite_on(expr.parse("1/x"), [1.0, 2.0])
    assert not expr.is_finite_on(expr.parse("1/x"), [0.0, 2.0])
    assert not expr.is_finite_on(expr.parse("log(x)"), [-1.0])


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 3))
@settings(max_examples=100, deadline=None)
def test_polynomial_matches_python(a, b, x):
    e = expr.parse("a*x^2 - b*x + 1/x", {"a": a, "b": b})
    assert e(x) == pytest.approx(a * x ** 2 - b * x + 1 / x, rel=1e-12, abs=1e-12)
