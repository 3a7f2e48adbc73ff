import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from morseflow.expr import (ExpressionDomainError, ExpressionError, ExpressionSyntaxError,
                            FormExpression, eval_form, eval_jet, exterior_derivative, parse,
                            wedge)


def test_precedence_and_power():
    e = parse("2 + 3*x^2", 2)
    assert e([2.0, 0.0]) == pytest.approx(14.0)
    assert parse("-x^2", 1)([3.0]) == pytest.approx(-9.0)
    assert parse("x^-1", 1)([4.0]) == pytest.approx(0.25)
    assert parse("2^(3)", 1)([0.0]) == pytest.approx(8.0)


def test_aliases_and_indexed_names():
    e = parse("x1 + 2*z", 3)
    assert e([1.0, 5.0, 2.0]) == pytest.approx(5.0)
    with pytest.raises(ExpressionError):
        parse("x4", 3)


@pytest.mark.parametrize("text", ["x +", "sin(x", "x ^ y", "foo(x)", "3 $ x", "sin(x, y)"])
def test_syntax_errors(text):
    with pytest.raises(ExpressionError):
        parse(text, 2)


def test_syntax_error_offset():
    with pytest.raises(ExpressionSyntaxError) as info:
        parse("x + * y", 2)
    assert info.value.offset == 4


def test_domain_error():
    e = parse("log(x)", 1)
    with pytest.raises(ExpressionDomainError):
        e([-1.0])


def test_jet_known_values():
    jv = parse("x*y + sin(x)", 2).jet([0.5, 2.0])
    assert jv.value == pytest.approx(1.0 + math.sin(0.5))
    np.testing.assert_allclose(jv.gradient, [2.0 + math.cos(0.5), 0.5])
    np.testing.assert_allclose(jv.hessian, [[-math.sin(0.5), 1.0], [1.0, 0.0]])


def test_compiled_and_tree_walk_agree():
    e = parse("exp(x)*cos(y) - sqrt(1 + x^2)/(2 + y^2) + log(3 + x*y)", 2)
    for p in ([0.3, -0.7], [1.1, 0.4], [-0.2, 0.9]):
        a, b = e.jet(p), eval_jet(e, p)
        assert a.value == pytest.approx(b.value, rel=1e-14)
        np.testing.assert_allclose(a.gradient, b.gradient, rtol=1e-13)
        np.testing.assert_allclose(a.hessian, b.hessian, rtol=1e-12, atol=1e-14)


def test_symbolic_diff_matches_jet():
    e = parse("x^3*y - cos(x*y) + exp(y)/x", 2)
    p = [0.8, -0.3]
    g = e.jet(p).gradient
    assert e.diff(0)(p) == pytest.approx(g[0], rel=1e-12)
    assert e.diff(1)(p) == pytest.approx(g[1], rel=1e-12)


def test_vectorized():
    e = parse("x*y + 1", 2)
    out = e.vectorized(np.array([[1.0, 2.0], [3.0, 4.0]]).T)
    np.testing.assert_allclose(out, [3.0, 13.0])


_leaves = st.sampled_from(["x", "y", "z", "1.5", "pi", "2"])


def _exprs():
    return st.recursive(
        _leaves,
        lambda inner: st.one_of(
            st.tuples(inner, st.sampled_from(["+", "-", "*"]), inner).map(
                lambda t: f"({t[0]} {t[1]} {t[2]})"),
            st.tuples(st.sampled_from(["sin", "cos"]), inner).map(lambda t: f"{t[0]}({t[1]})"),
            st.tuples(inner, st.integers(0, 3)).map(lambda t: f"({t[0]})^{t[1]}"),
            inner.map(lambda s: f"-{s}"),
        ),
        max_leaves=8,
    )


@settings(max_examples=60, deadline=None)
@given(_exprs(), st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_text_round_trip(text, point):
    e = parse(text, 3)
    again = parse(e.text, 3)
    assert again(point) == pytest.approx(e(point), rel=1e-12, abs=1e-12)


def test_form_normalization():
    f = FormExpression.from_terms(2, 3, {"y,x": "1", "x,x": "5"})
    assert list(f.coefficients) == [(0, 1)]
    assert eval_form(f, [0, 0, 0], [[1, 0, 0], [0, 1, 0]]) == pytest.approx(-1.0)


def test_exterior_derivative_squares_to_zero(rng):
    a = FormExpression.from_terms(1, 3, {"x": "y*z^2", "y": "sin(x*z)", "z": "exp(x)*y"})
    dda = exterior_derivative(exterior_derivative(a))
    for _ in range(5):
        p = rng.normal(size=3)
        assert eval_form(dda, p, rng.normal(size=(3, 3))) == pytest.approx(0.0, abs=1e-12)


def test_exterior_derivative_of_function():
    h = FormExpression.from_terms(0, 2, {"": "x^2*y"})
    dh = exterior_derivative(h)
    assert eval_form(dh, [1.0, 2.0], [[0.5, 1.0]]) == pytest.approx(4.0 * 0.5 + 1.0)


def test_wedge():
    dx = FormExpression.from_terms(1, 2, {"x": "1"})
    dy = FormExpression.from_terms(1, 2, {"y": "1"})
    w = wedge(dx, dy)
    assert eval_form(w, [0, 0], np.eye(2)) == 1.0
    assert eval_form(wedge(dy, dx), [0, 0], np.eye(2)) == -1.0
    assert wedge(dx, dx).is_zero()
    area = wedge(dx, dy)
    with pytest.raises(ExpressionError):
        wedge(area, dx)
