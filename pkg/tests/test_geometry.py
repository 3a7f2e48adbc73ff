import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from morseflow.expr import parse
from morseflow.geometry import GeometryError, circle, klein, make_manifold, sphere, torus


def test_retract_and_tangent(rng):
    M = sphere(2)
    for _ in range(20):
        x = rng.normal(size=3) * rng.uniform(0.5, 2)
        y = M.retract(x)
        assert np.linalg.norm(y) == pytest.approx(1.0, abs=1e-12)
        B = M.tangent_basis(y)
        np.testing.assert_allclose(B @ y, 0, atol=1e-12)
        np.testing.assert_allclose(B @ B.T, np.eye(2), atol=1e-12)
        assert M.orientation_sign(y, B) == 1  # bases come out positively oriented


def test_sphere_chart_jacobian_by_differences(rng):
    M = sphere(2)
    x = M.retract(rng.normal(size=3))
    psi = M.chart(x)
    y0 = np.array([0.1, -0.05])
    z, J = psi(y0)
    assert np.linalg.norm(z) == pytest.approx(1.0, abs=1e-13)
    h = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (psi(y0 + e)[0] - psi(y0 - e)[0]) / (2 * h)
        np.testing.assert_allclose(J[:, i], fd, atol=1e-8)


def test_riemannian_gradient_is_tangent():
    M = sphere(2)
    f = parse("x*y + z^3", 3)
    x = M.retract(np.array([0.3, -0.4, 0.5]))
    g = M.riemannian_gradient(f, x)
    assert abs(g @ x) < 1e-12


def test_tangent_hessian_at_pole():
    M = sphere(2)
    f = parse("z", 3)
    H = M.tangent_hessian(f, np.array([0.0, 0.0, 1.0]))
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(H)), [-1.0, -1.0], atol=1e-12)
    with pytest.raises(GeometryError):
        M.tangent_hessian(f, np.array([1.0, 0.0, 0.0]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_torus_reduce(x):
    M = torus(2)
    r, g = M.reduce(np.array(x))
    assert all(0 <= v < 1 for v in r)
    np.testing.assert_allclose(M.deck_apply(g, x), r, atol=1e-12)
    np.testing.assert_allclose(M.deck_apply(M.deck_inverse(g), r), x, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_klein_reduce_and_deck(x):
    M = klein()
    r, g = M.reduce(np.array(x))
    assert 0 <= r[0] < 0.5 and 0 <= r[1] < 1
    np.testing.assert_allclose(M.deck_apply(g, x), r, atol=1e-10)
    inv = M.deck_inverse(g)
    np.testing.assert_allclose(M.deck_apply(inv, r), x, atol=1e-10)
    h = (1, 2)
    np.testing.assert_allclose(M.deck_apply(M.deck_compose(h, g), x),
                               M.deck_apply(h, r), atol=1e-10)


def test_klein_glide_flips_orientation():
    M = klein()
    L = M.deck_linear((1, 0))
    assert np.linalg.det(L) == pytest.approx(-1.0)
    assert not M.orientable
    with pytest.raises(GeometryError):
        M.orientation_sign(np.zeros(2), np.eye(2))


def test_euler_characteristics():
    assert sphere(2).euler_characteristic == 2
    assert circle().euler_characteristic == 0
    assert torus(2).euler_characteristic == 0
    assert make_manifold("klein").euler_characteristic == 0
