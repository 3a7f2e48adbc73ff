import numpy as np
import pytest

from morseflow.critical import (DegenerateCriticalPointError, IncompleteCriticalSetError,
                                SeedSpec, classify, critical_set_from_points,
                                find_critical_points, negated)
from morseflow.expr import parse
from morseflow.geometry import sphere, torus


def test_height_on_sphere(s2_height):
    cs = s2_height.critical
    assert cs.counts() == [1, 0, 1]
    bottom, top = cs.points
    np.testing.assert_allclose(bottom.location, [0, 0, -1], atol=1e-10)
    np.testing.assert_allclose(top.location, [0, 0, 1], atol=1e-10)
    assert bottom.unstable_dim == 2 and top.stable_dim == 2


def test_torus_points_and_values(t2):
    cs = t2.critical
    assert cs.counts() == [1, 2, 1]
    locs = sorted(tuple(np.round(p.location, 8)) for p in cs.points)
    assert locs == [(0.0, 0.0), (0.0, 0.5), (0.5, 0.0), (0.5, 0.5)]
    assert cs.euler_characteristic() == 0


def test_perturbed_sphere_count(s2_perturbed):
    assert s2_perturbed.critical.counts() == [1, 1, 2]
    assert all(abs(ev) > 1e-3 for p in s2_perturbed.critical for ev in p.eigenvalues)


def test_degenerate_point_rejected():
    M = torus(2)
    f = parse("cos(2*pi*x)^3 + cos(2*pi*y)", 2)
    with pytest.raises(DegenerateCriticalPointError):
        classify(M, f, np.array([0.25, 0.0]))


def test_incomplete_search_detected():
    with pytest.raises(IncompleteCriticalSetError):
        find_critical_points(sphere(2), parse("z", 3), SeedSpec(count=1, seed=3))


def test_negated_flips_index(s2_perturbed):
    neg = negated(s2_perturbed.critical)
    for p, q in zip(s2_perturbed.critical, neg):
        assert q.index == 2 - p.index and q.id == p.id


def test_frames_orient_positively(t2):
    M = t2.M
    for p in t2.critical:
        frame = np.vstack([p.unstable_frame.vectors, p.stable_frame.vectors])
        assert M.orientation_sign(p.location, frame) == 1


def test_from_points():
    M = sphere(2)
    cs = critical_set_from_points(M, parse("z", 3), [[0, 0, -1], [0, 0, 1]])
    assert [p.index for p in cs] == [0, 2]
