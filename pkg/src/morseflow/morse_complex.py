"""The integer Morse complex, its homology, and duality checks."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .connections import ConnectionData
from .critical import CriticalSet
from .snf import as_int_matrix, determinant, invariant_factors, rank_mod_p

__all__ = [
    "Integers",
    "Rationals",
    "ModP",
    "Twisted",
    "LocalSystem",
    "MorseComplex",
    "HomologyResult",
    "ComplexError",
    "boundary_sign",
    "build_complex",
    "homology",
    "cohomology",
    "morse_inequalities",
    "poincare_dual",
]


class ComplexError(RuntimeError):
    pass


@dataclass(frozen=True)
class Integers:
    label = "Z"


@dataclass(frozen=True)
class Rationals:
    """Field of fractions of Z: same boundary matrices, torsion discarded."""

    label = "Q"


@dataclass(frozen=True)
class ModP:
    p: int

    @property
    def label(self) -> str:
        return f"Z/{self.p}"


@dataclass(frozen=True, eq=False)
class LocalSystem:
    """Integer representation of pi_1 of a flat quotient, one matrix per
    generator (torus: coordinate loops; Klein bottle: glide, then y-loop)."""

    matrices: tuple[np.ndarray, ...]

    def __post_init__(self):
        mats = tuple(as_int_matrix(np.atleast_2d(m)) for m in self.matrices)
        object.__setattr__(self, "matrices", mats)
        r = self.rank
        for m in mats:
            if m.shape != (r, r):
                raise ComplexError("local system matrices must be square of equal size")
            if abs(determinant(m.tolist())) != 1:
                raise ComplexError("local system matrices must be invertible over Z")

    @property
    def rank(self) -> int:
        return self.matrices[0].shape[0]

    def _power(self, m: np.ndarray, k: int) -> np.ndarray:
        base = m if k >= 0 else as_int_matrix(np.rint(np.linalg.inv(m.astype(float))))
        out = as_int_matrix(np.eye(self.rank, dtype=int))
        for _ in range(abs(k)):
            out = out.dot(base)
        return out

    def image(self, manifold, word) -> np.ndarray:
        if manifold.kind == "torus":
            out = as_int_matrix(np.eye(self.rank, dtype=int))
            for m, k in zip(self.matrices, word):
                out = out.dot(self._power(m, int(k)))
            return out
        glide, loop = self.matrices
        k, m = word
        return self._power(loop, int(m)).dot(self._power(glide, int(k)))

    def check(self, manifold) -> None:
        """Verify the defining relations of the fundamental group."""
        a, b = self.matrices[:2]
        if manifold.kind == "torus":
            for i, x in enumerate(self.matrices):
                for y in self.matrices[i + 1:]:
                    if not (x.dot(y) == y.dot(x)).all():
                        raise ComplexError("torus local system matrices must commute")
        else:
            lhs = a.dot(b).dot(self._power(a, -1))
            if not (lhs == self._power(b, -1)).all():
                raise ComplexError("Klein local system must satisfy g t g^-1 = t^-1")


@dataclass(frozen=True)
class Twisted:
    system: LocalSystem

    @property
    def label(self) -> str:
        return "twisted"


Mode = Integers | Rationals | ModP | Twisted


@dataclass
class HomologyResult:
    betti: list[int]
    torsion: list[list[int]]
    mode: str = "Z"

    def as_dict(self) -> dict:
        return {"mode": self.mode, "betti": list(self.betti),
                "torsion": [list(t) for t in self.torsion]}

    def euler_characteristic(self) -> int:
        return sum((-1) ** k * b for k, b in enumerate(self.betti))

    def __eq__(self, other):
        return (isinstance(other, HomologyResult) and self.betti == other.betti
                and self.torsion == other.torsion)


@dataclass
class MorseComplex:
    """Chain groups spanned by critical points; ``boundary[k]`` maps degree k
    to degree k - 1 with rows indexed by ``generators[k - 1]``."""

    dim: int
    generators: list[list[int]]
    boundary: dict[int, np.ndarray]
    mode: Mode = field(default_factory=Integers)
    block: int = 1

    def matrix(self, k: int) -> np.ndarray:
        if k in self.boundary:
            return self.boundary[k]
        rows = len(self.generators[k - 1]) if 0 < k <= self.dim + 1 and k - 1 <= self.dim else 0
        cols = len(self.generators[k]) if 0 <= k <= self.dim else 0
        return np.zeros((rows * self.block, cols * self.block), dtype=object)

    def rank(self, k: int) -> int:
        return len(self.generators[k]) * self.block if 0 <= k <= self.dim else 0

    def check_d2(self) -> None:
        for k in range(2, self.dim + 1):
            prod = self.matrix(k - 1).dot(self.matrix(k))
            if isinstance(self.mode, ModP):
                prod = prod % self.mode.p
            bad = np.argwhere(prod != 0)
            if len(bad):
                i, j = bad[0]
                raise ComplexError(
                    f"d^2 != 0: entry ({i}, {j}) of D_{k - 1} D_{k} is {prod[i, j]}")

    def as_dict(self) -> dict:
        return {
            "mode": self.mode.label,
            "generators": [list(g) for g in self.generators],
            "boundary": {str(k): [[int(v) for v in row] for row in self.matrix(k)]
                         for k in range(1, self.dim + 1)},
        }


def boundary_sign(n: int, index: int) -> int:
    """Sign relating the boundary entry n_{pq} to the signed line count N_{p,q}
    for a generator p of the given index on an n-manifold."""
    return -1 if (n - index) % 2 == 0 else 1


def build_complex(critical: CriticalSet, connections: ConnectionData,
                  mode: Mode | None = None) -> MorseComplex:
    mode = mode or Integers()
    M = critical.manifold
    n = M.dim
    if not M.orientable and mode != ModP(2):
        raise ComplexError("non-orientable manifolds support Z/2 coefficients only")
    if isinstance(mode, Twisted):
        if not M.is_quotient:
            raise ComplexError("twisted coefficients need a flat quotient backend")
        mode.system.check(M)
    gens = [[p.id for p in critical.by_index(k)] for k in range(n + 1)]
    r = mode.system.rank if isinstance(mode, Twisted) else 1
    boundary = {}
    for k in range(1, n + 1):
        D = np.zeros((len(gens[k - 1]) * r, len(gens[k]) * r), dtype=object)
        D[:] = 0
        for j, p in enumerate(gens[k]):
            eps = boundary_sign(n, k)
            for i, q in enumerate(gens[k - 1]):
                lines = connections.lines.get((p, q), [])
                if isinstance(mode, Twisted):
                    block = as_int_matrix(np.zeros((r, r), dtype=int))
                    for line in lines:
                        block = block + line.sign * mode.system.image(M, line.deck)
                    D[i * r:(i + 1) * r, j * r:(j + 1) * r] = eps * block
                elif not M.orientable:
                    D[i, j] = len(lines) % 2
                else:
                    D[i, j] = eps * sum(line.sign for line in lines)
        boundary[k] = D
    C = MorseComplex(n, gens, boundary, mode, r)
    C.check_d2()
    return C


def homology(C: MorseComplex) -> HomologyResult:
    betti, torsion = [], []
    for k in range(C.dim + 1):
        Dk, Dk1 = C.matrix(k), C.matrix(k + 1)
        if isinstance(C.mode, ModP):
            p = C.mode.p
            rk = rank_mod_p(Dk, p) if Dk.size else 0
            rk1 = rank_mod_p(Dk1, p) if Dk1.size else 0
            betti.append(C.rank(k) - rk - rk1)
            torsion.append([])
            continue
        fk = invariant_factors(Dk) if Dk.size else []
        fk1 = invariant_factors(Dk1) if Dk1.size else []
        betti.append(C.rank(k) - len(fk) - len(fk1))
        torsion.append([] if isinstance(C.mode, Rationals) else [d for d in fk1 if d > 1])
    return HomologyResult(betti, torsion, C.mode.label)


def cohomology(C: MorseComplex) -> HomologyResult:
    """H^k of Hom(C, Z): coboundary delta_k = D_{k+1}^T."""
    betti, torsion = [], []
    for k in range(C.dim + 1):
        Dk, Dk1 = C.matrix(k), C.matrix(k + 1)
        if isinstance(C.mode, ModP):
            p = C.mode.p
            rk = rank_mod_p(Dk.T, p) if Dk.size else 0
            rk1 = rank_mod_p(Dk1.T, p) if Dk1.size else 0
            betti.append(C.rank(k) - rk - rk1)
            torsion.append([])
            continue
        fk = invariant_factors(Dk.T) if Dk.size else []
        fk1 = invariant_factors(Dk1.T) if Dk1.size else []
        betti.append(C.rank(k) - len(fk) - len(fk1))
        torsion.append([] if isinstance(C.mode, Rationals) else [d for d in fk if d > 1])
    return HomologyResult(betti, torsion, C.mode.label)


def morse_inequalities(critical: CriticalSet, H: HomologyResult) -> dict:
    c = critical.counts()
    b = H.betti
    rows = []
    for k in range(len(c)):
        lhs = sum((-1) ** (k - i) * c[i] for i in range(k + 1))
        rhs = sum((-1) ** (k - i) * b[i] for i in range(k + 1))
        rows.append({"k": k, "critical": lhs, "betti": rhs, "slack": lhs - rhs,
                     "ok": lhs >= rhs})
    euler_c = sum((-1) ** i * v for i, v in enumerate(c))
    euler_b = sum((-1) ** i * v for i, v in enumerate(b))
    return {
        "counts": c,
        "betti": list(b),
        "strong": rows,
        "euler": {"critical": euler_c, "betti": euler_b, "ok": euler_c == euler_b},
        "ok": all(r["ok"] for r in rows) and euler_c == euler_b,
    }


def _diagonal_signs(C: MorseComplex, dual: MorseComplex):
    """Find e = +-1 per generator with dual[p, q] = e_p e_q D[q, p].

    Returns the sign map or None when the absolute values or the sign
    constraints are inconsistent.
    """
    n = C.dim
    edges: dict[int, list[tuple[int, int]]] = {}
    all_ids = [g for gens in C.generators for g in gens]
    for k in range(1, n + 1):
        D = C.matrix(k)
        Dd = dual.matrix(n - k + 1)
        rows, cols = C.generators[k - 1], C.generators[k]
        drows, dcols = dual.generators[n - k], dual.generators[n - k + 1]
        for i, q in enumerate(rows):
            for j, p in enumerate(cols):
                a = D[i, j]
                b = Dd[drows.index(p), dcols.index(q)]
                if abs(a) != abs(b):
                    return None
                if a != 0:
                    s = 1 if a == b else -1
                    edges.setdefault(p, []).append((q, s))
                    edges.setdefault(q, []).append((p, s))
    signs: dict[int, int] = {}
    for root in all_ids:
        if root in signs:
            continue
        signs[root] = 1
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v, s in edges.get(u, []):
                want = signs[u] * s
                if v not in signs:
                    signs[v] = want
                    queue.append(v)
                elif signs[v] != want:
                    return None
    return signs


def poincare_dual(C: MorseComplex, dual: MorseComplex) -> dict:
    """Compare the complex of -f with the transpose of the complex of f.

    ``dual`` must be built on the same critical ids, each with index n - k.
    Reports the generator sign diagonal relating the two boundary systems,
    and compares H_j(dual) with H^{n-j} of Hom(C, Z).
    """
    if isinstance(C.mode, Twisted):
        return {"skipped": "duality is checked for untwisted coefficients only", "ok": True}
    n = C.dim
    signs = _diagonal_signs(C, dual)
    Hd = homology(dual)
    Hc = cohomology(C)
    matches = []
    for j in range(n + 1):
        k = n - j
        ok = Hd.betti[j] == Hc.betti[k] and Hd.torsion[j] == Hc.torsion[k]
        matches.append({"degree": j, "dual_betti": Hd.betti[j], "cohomology_betti": Hc.betti[k],
                        "dual_torsion": Hd.torsion[j], "cohomology_torsion": Hc.torsion[k],
                        "ok": ok})
    transpose_ok = signs is not None
    return {
        "transpose_match": transpose_ok,
        "generator_signs": None if signs is None else {str(k): v for k, v in sorted(signs.items())},
        "dual_homology": Hd.as_dict(),
        "cohomology": Hc.as_dict(),
        "degrees": matches,
        "ok": transpose_ok and all(m["ok"] for m in matches),
    }
