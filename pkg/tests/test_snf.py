from fractions import Fraction
from itertools import combinations
from math import gcd

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from morseflow.snf import (determinant, integer_rank, invariant_factors, rank_mod_p,
                           smith_normal_form)


def frac_det(rows):
    """Plain Gaussian elimination over the rationals."""
    a = [[Fraction(v) for v in r] for r in rows]
    n, det = len(a), Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if a[r][c]), None)
        if piv is None:
            return 0
        if piv != c:
            a[c], a[piv] = a[piv], a[c]
            det = -det
        det *= a[c][c]
        for r in range(c + 1, n):
            f = a[r][c] / a[c][c]
            a[r] = [x - f * y for x, y in zip(a[r], a[c])]
    return int(det)


def divisor_chain(A):
    """Invariant factors from determinantal divisors d_k = gcd of k x k minors."""
    A = [list(map(int, r)) for r in A]
    m, n = len(A), len(A[0]) if A else 0
    d = [1]
    for k in range(1, min(m, n) + 1):
        g = 0
        for rows in combinations(range(m), k):
            for cols in combinations(range(n), k):
                g = gcd(g, frac_det([[A[i][j] for j in cols] for i in rows]))
        if g == 0:
            break
        d.append(g)
    return [d[k] // d[k - 1] for k in range(1, len(d))]


def check_snf(A):
    U, S, V = smith_normal_form(A)
    A = np.asarray(A, dtype=object)
    assert (U.dot(A).dot(V) == S).all()
    assert abs(determinant(U.tolist())) == 1
    assert abs(determinant(V.tolist())) == 1
    diag = [S[i, i] for i in range(min(S.shape))]
    off = S.copy()
    for i in range(min(S.shape)):
        off[i, i] = 0
    assert not off.any()
    assert all(x >= 0 for x in diag)
    nz = [x for x in diag if x]
    assert diag[:len(nz)] == nz
    assert all(b % a == 0 for a, b in zip(nz, nz[1:]))
    return nz


def test_random_suite_1000():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        m, n = rng.integers(1, 9, size=2)
        density = rng.uniform(0.2, 1.0)
        A = rng.integers(-9, 10, size=(m, n)) * (rng.random((m, n)) < density)
        check_snf(A.tolist())


def test_invariant_factors_match_determinantal_divisors():
    rng = np.random.default_rng(99)
    for _ in range(150):
        m, n = rng.integers(1, 5, size=2)
        A = rng.integers(-6, 7, size=(m, n)).tolist()
        assert invariant_factors(A) == divisor_chain(A)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 6).flatmap(lambda m: st.integers(1, 6).flatmap(
    lambda n: st.lists(st.lists(st.integers(-30, 30), min_size=n, max_size=n),
                       min_size=m, max_size=m))))
def test_snf_property(A):
    nz = check_snf(A)
    assert integer_rank(A) == len(nz) == np.linalg.matrix_rank(np.array(A, dtype=float))


def test_known_forms():
    assert invariant_factors([[2, 4, 4], [-6, 6, 12], [10, -4, -16]]) == [2, 6, 12]
    assert invariant_factors([[0, 0], [0, 0]]) == []
    assert invariant_factors([[-2]]) == [2]


def test_big_entries_stay_exact():
    A = [[10 ** 20 + 1, 10 ** 20], [10 ** 20, 10 ** 20 - 1]]
    assert determinant(A) == -1
    assert invariant_factors(A) == [1, 1]


@pytest.mark.parametrize("p", [2, 3, 5])
def test_rank_mod_p(p):
    rng = np.random.default_rng(p)
    for _ in range(50):
        A = rng.integers(-5, 6, size=(4, 5)).tolist()
        # Z/p rank counts invariant factors not divisible by p
        assert rank_mod_p(A, p) == sum(1 for d in divisor_chain(A) if d % p)


def test_determinant_matches_fractions():
    rng = np.random.default_rng(5)
    for _ in range(50):
        k = int(rng.integers(1, 7))
        A = rng.integers(-20, 21, size=(k, k)).tolist()
        assert determinant(A) == frac_det(A)
