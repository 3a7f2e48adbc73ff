"""Smith normal form over the integers, exact with Python ints."""
from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = [
    "smith_normal_form",
    "invariant_factors",
    "integer_rank",
    "rank_mod_p",
    "as_int_matrix",
    "determinant",
]


def as_int_matrix(A, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Object array of Python ints (arbitrary precision arithmetic)."""
    arr = np.asarray(A, dtype=object)
    if arr.size == 0:
        rows, cols = shape if shape is not None else (arr.shape + (0, 0))[:2]
        return np.zeros((rows, cols), dtype=object)
    if arr.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    out = np.empty(arr.shape, dtype=object)
    for idx, v in np.ndenumerate(arr):
        iv = int(v)
        if iv != v:
            raise ValueError(f"non-integer entry {v!r}")
        out[idx] = iv
    return out


def _identity(n: int) -> list[list[int]]:
    return [[int(i == j) for j in range(n)] for i in range(n)]


def smith_normal_form(A) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (U, S, V) with U @ A @ V == S, U and V unimodular, S diagonal,
    nonnegative, each diagonal entry dividing the next."""
    A = as_int_matrix(A)
    m, n = A.shape
    S = [list(row) for row in A]
    U = _identity(m)
    V = _identity(n)

    def swap_rows(i, j):
        S[i], S[j] = S[j], S[i]
        U[i], U[j] = U[j], U[i]

    def swap_cols(i, j):
        for row in S:
            row[i], row[j] = row[j], row[i]
        for row in V:
            row[i], row[j] = row[j], row[i]

    def add_row(target, source, factor):  # row_target += factor * row_source
        if factor:
            S[target] = [a + factor * b for a, b in zip(S[target], S[source])]
            U[target] = [a + factor * b for a, b in zip(U[target], U[source])]

    def add_col(target, source, factor):
        if factor:
            for row in S:
                row[target] += factor * row[source]
            for row in V:
                row[target] += factor * row[source]

    for t in range(min(m, n)):
        entries = [(abs(S[i][j]), i, j) for i in range(t, m) for j in range(t, n) if S[i][j]]
        if not entries:
            break
        _, i, j = min(entries)
        swap_rows(t, i)
        swap_cols(t, j)
        while True:
            piv = S[t][t]
            for i in range(t + 1, m):
                add_row(i, t, -(S[i][t] // piv))
            for j in range(t + 1, n):
                add_col(j, t, -(S[t][j] // piv))
            rest = [(abs(S[i][t]), i, None) for i in range(t + 1, m) if S[i][t]]
            rest += [(abs(S[t][j]), None, j) for j in range(t + 1, n) if S[t][j]]
            if rest:
                _, i, j = min(rest, key=lambda e: e[0])
                if i is not None:
                    swap_rows(t, i)
                else:
                    swap_cols(t, j)
                continue
            bad = next(((i, j) for i in range(t + 1, m) for j in range(t + 1, n)
                        if S[i][j] % piv), None)
            if bad is None:
                break
            add_row(t, bad[0], 1)
        if S[t][t] < 0:
            S[t] = [-a for a in S[t]]
            U[t] = [-a for a in U[t]]
    return (as_int_matrix(U, (m, m)), as_int_matrix(S, (m, n)), as_int_matrix(V, (n, n)))


def invariant_factors(A) -> list[int]:
    """Nonzero diagonal entries of the Smith normal form."""
    _, S, _ = smith_normal_form(A)
    return [int(S[i, i]) for i in range(min(S.shape)) if S[i, i] != 0]


def integer_rank(A) -> int:
    return len(invariant_factors(A))


def rank_mod_p(A, p: int) -> int:
    """Rank over the field Z/p by Gaussian elimination."""
    rows = [[int(v) % p for v in row] for row in as_int_matrix(A)]
    if not rows:
        return 0
    ncols = len(rows[0])
    rank = 0
    for c in range(ncols):
        pivot = next((r for r in range(rank, len(rows)) if rows[r][c]), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        inv = pow(rows[rank][c], -1, p)
        rows[rank] = [(v * inv) % p for v in rows[rank]]
        for r in range(len(rows)):
            if r != rank and rows[r][c]:
                f = rows[r][c]
                rows[r] = [(a - f * b) % p for a, b in zip(rows[r], rows[rank])]
        rank += 1
    return rank


def determinant(A: Sequence[Sequence[int]]) -> int:
    """Exact integer determinant by fraction-free (Bareiss) elimination."""
    M = [list(map(int, row)) for row in A]
    n = len(M)
    if n == 0:
        return 1
    sign, prev = 1, 1
    for k in range(n - 1):
        if M[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if M[i][k]), None)
            if swap is None:
                return 0
            M[k], M[swap] = M[swap], M[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                M[i][j] = (M[i][j] * M[k][k] - M[i][k] * M[k][j]) // prev
        prev = M[k][k]
    return sign * M[-1][-1]
