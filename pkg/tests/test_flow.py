import numpy as np
import pytest

from morseflow.flow import Sphere17Flow, limit, pullback_form
from morseflow.geometry import sphere


def test_uphill_reaches_top(s2_height):
    x0 = sphere(2).retract(np.array([0.3, 0.2, -0.5]))
    traj = s2_height.flow.integrate(x0, 1)
    assert traj.converged and traj.limit == 1
    values = [s2_height.f(p) for p in traj.points]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
    assert limit(s2_height.flow, x0, -1) == 0


def test_exact_height_flow(s2_height):
    # f = z: z(t) = tanh(t + atanh z0) along the uphill flow
    x0 = sphere(2).retract(np.array([0.6, 0.0, 0.2]))
    t = 0.7
    x = s2_height.flow.flow_map(t, x0)
    assert x[2] == pytest.approx(np.tanh(t + np.arctanh(x0[2])), abs=1e-7)
    assert x[1] == pytest.approx(0.0, abs=1e-10)


def test_pushforward_by_differences(s2_height):
    x0 = sphere(2).retract(np.array([0.5, 0.5, 0.1]))
    v = sphere(2).tangent_basis(x0)[0]
    _, W = s2_height.flow.pushforward(0.5, x0, [v])
    h = 1e-6
    plus = s2_height.flow.flow_map(0.5, sphere(2).retract(x0 + h * v))
    minus = s2_height.flow.flow_map(0.5, sphere(2).retract(x0 - h * v))
    np.testing.assert_allclose(W[0], (plus - minus) / (2 * h), atol=1e-6)


def test_torus_deck_word(t2):
    traj = t2.flow.integrate(np.array([0.9, 0.95]), 1)
    assert traj.converged
    assert t2.critical[traj.limit].value == pytest.approx(2.0)
    np.testing.assert_allclose(t2.M.deck_apply(traj.deck, t2.critical[traj.limit].location),
                               [1.0, 1.0], atol=1e-3)


def test_sphere17_group_law():
    M = sphere(2)
    F = Sphere17Flow(M, [1.0, 0.0])
    x = M.retract(np.array([0.2, -0.4, 0.3]))
    a = F.flow_map(0.3, F.flow_map(0.5, x))
    np.testing.assert_allclose(a, F.flow_map(0.8, x), atol=1e-12)
    np.testing.assert_allclose(F.flow_map(-0.8, F.flow_map(0.8, x)), x, atol=1e-12)
    # translation to infinity in the plane: distance to the pole decays like 2/t
    far = F.flow_map(1e4, x)
    assert np.linalg.norm(far - [0, 0, 1]) < 3e-4


def test_sphere17_velocity_is_derivative():
    M = sphere(2)
    F = Sphere17Flow(M, [0.6, 0.8])
    x = M.retract(np.array([0.1, 0.7, -0.2]))
    h = 1e-6
    fd = (F.flow_map(h, x) - F.flow_map(-h, x)) / (2 * h)
    np.testing.assert_allclose(F.velocity(x), fd, atol=1e-8)


def test_pullback_of_exact_form(s2_height):
    # phi_t^* dh evaluated on v equals dh(d phi_t v)
    dh = s2_height.form(1, {"x": "1"})
    x0 = sphere(2).retract(np.array([0.4, 0.1, 0.3]))
    v = sphere(2).tangent_basis(x0)[1]
    _, W = s2_height.flow.pushforward(0.4, x0, [v])
    assert pullback_form(s2_height.flow, dh, 0.4, x0, [v]) == pytest.approx(W[0][0], abs=1e-9)
