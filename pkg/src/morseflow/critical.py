"""Critical points of f on a manifold backend, their indices and frames."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .expr import ScalarExpression
from .geometry import GeometryError, Manifold, TangentFrame

log = logging.getLogger(__name__)

__all__ = [
    "CriticalPoint",
    "CriticalSet",
    "SeedSpec",
    "DegenerateCriticalPointError",
    "IncompleteCriticalSetError",
    "find_critical_points",
    "orient",
    "classify",
    "negated",
    "critical_set_from_points",
]


class DegenerateCriticalPointError(RuntimeError):
    pass


class IncompleteCriticalSetError(RuntimeError):
    pass


@dataclass(frozen=True)
class SeedSpec:
    """Either a deterministic grid (``grid`` per-axis counts) or ``count``
    pseudo-random seeds drawn from ``seed``.  ``count=None`` means 32*3^n."""

    seed: int = 20240917
    count: int | None = None
    grid: tuple[int, ...] | None = None

    def points(self, M: Manifold) -> np.ndarray:
        if self.grid:
            return M.grid_points(self.grid)
        count = self.count if self.count is not None else 32 * 3 ** M.dim
        return M.random_points(count, np.random.default_rng(self.seed))


@dataclass(frozen=True, eq=False)
class CriticalPoint:
    id: int
    location: np.ndarray
    value: float
    index: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # rows: ambient tangent vectors matching eigenvalues
    unstable_frame: TangentFrame
    stable_frame: TangentFrame

    @property
    def unstable_dim(self) -> int:
        return self.unstable_frame.size

    @property
    def stable_dim(self) -> int:
        return self.stable_frame.size

    def split(self, v) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates of a tangent displacement in (unstable, stable) frames."""
        v = np.asarray(v, dtype=float)
        return self.unstable_frame.vectors @ v, self.stable_frame.vectors @ v

    def as_dict(self) -> dict:
        return {
            "id": self.id,
            "location": [float(v) for v in self.location],
            "value": float(self.value),
            "index": self.index,
            "eigenvalues": [float(v) for v in self.eigenvalues],
        }


@dataclass(frozen=True)
class CriticalSet:
    points: tuple[CriticalPoint, ...]
    pairing_radius: float
    manifold: Manifold = field(repr=False)
    function: ScalarExpression = field(repr=False)
    seed_spec: SeedSpec | None = None

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i: int) -> CriticalPoint:
        return self.points[i]

    def by_index(self, k: int) -> list[CriticalPoint]:
        return [p for p in self.points if p.index == k]

    def counts(self) -> list[int]:
        return [len(self.by_index(k)) for k in range(self.manifold.dim + 1)]

    def euler_characteristic(self) -> int:
        return sum((-1) ** p.index for p in self.points)

    def nearest(self, x) -> tuple[CriticalPoint, float]:
        best = min(self.points, key=lambda p: self.manifold.distance(p.location, x))
        return best, self.manifold.distance(best.location, x)


def _newton(M: Manifold, f: ScalarExpression, x0, grad_tol: float,
            max_iter: int = 100, damping: float = 1e-9, max_step: float = 0.25):
    x = np.array(x0, dtype=float)
    quotient = M.is_quotient
    for _ in range(max_iter):
        g = M.riemannian_gradient(f, x)
        if np.linalg.norm(g) < grad_tol:
            return x
        basis = M.tangent_basis(x)
        h = M.tangent_hessian(f, x, basis=basis, check=False)
        gt = basis @ g
        # Tikhonov-regularized Newton step, capped in length
        step = -np.linalg.solve(h.T @ h + damping * np.eye(len(gt)), h.T @ gt)
        size = np.linalg.norm(step)
        if size > max_step:
            step *= max_step / size
        x = x + basis.T @ step
        x = x if quotient else M.retract(x)
    g = M.riemannian_gradient(f, x)
    return x if np.linalg.norm(g) < grad_tol else None


def _sign_normalize(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def classify(M: Manifold, f: ScalarExpression, x, id: int = -1,
             nondegen_tol: float = 1e-6, grad_tol: float = 1e-10) -> CriticalPoint:
    """Index and eigenframe at a critical point ``x``, frames oriented."""
    x = np.asarray(x, dtype=float)
    basis = M.tangent_basis(x)
    h = M.tangent_hessian(f, x, basis=basis, grad_tol=max(grad_tol, 1e-7))
    w, q = np.linalg.eigh(h)
    if np.min(np.abs(w)) < nondegen_tol:
        raise DegenerateCriticalPointError(
            f"degenerate critical point at {x.tolist()}: Hessian eigenvalues {w.tolist()}")
    vecs = (basis.T @ q).T
    vecs = np.array([_sign_normalize(v) for v in vecs])
    neg = w < 0
    stable = vecs[neg]
    unstable = vecs[~neg]
    point = CriticalPoint(
        id=id,
        location=x,
        value=float(f(x)),
        index=int(neg.sum()),
        eigenvalues=w,
        eigenvectors=vecs,
        unstable_frame=TangentFrame(x, unstable),
        stable_frame=TangentFrame(x, stable),
    )
    return orient(point, M)


def orient(c: CriticalPoint, M: Manifold) -> CriticalPoint:
    """Make (unstable_frame, stable_frame) a positive frame of T_pX.

    The stable frame absorbs the sign flip; a minimum has no stable
    directions, so there the last unstable vector is flipped instead.
    Non-orientable backends keep the normalized eigenvectors as they are.
    """
    if not M.orientable:
        return c
    u = c.unstable_frame.vectors.copy()
    s = c.stable_frame.vectors.copy()
    sign = M.orientation_sign(c.location, np.vstack([u, s]))
    if sign < 0:
        if len(s):
            s[-1] = -s[-1]
        else:
            u[-1] = -u[-1]
    return replace(
        c,
        unstable_frame=TangentFrame(c.location, u, 1),
        stable_frame=TangentFrame(c.location, s, 1),
    )


def find_critical_points(M: Manifold, f: ScalarExpression, seeds: SeedSpec | None = None,
                         grad_tol: float = 1e-10, nondegen_tol: float = 1e-6,
                         merge_tol: float = 1e-6, pairing_radius: float = 1e-3,
                         check_euler: bool = True) -> CriticalSet:
    """Newton search from every seed, merge, classify and orient."""
    if f.num_vars != M.ambient_dim:
        raise ValueError(f"f has {f.num_vars} variables, manifold needs {M.ambient_dim}")
    seeds = seeds or SeedSpec()
    found: list[np.ndarray] = []
    failures = 0
    for s in seeds.points(M):
        try:
            x = _newton(M, f, s, grad_tol)
        except (GeometryError, ArithmeticError, np.linalg.LinAlgError):
            x = None
        if x is None:
            failures += 1
            continue
        if M.is_quotient:
            x = M.reduce(x)[0]
        if not any(M.distance(x, y) < merge_tol for y in found):
            found.append(x)
    if failures:
        log.info("%d of the seeds did not converge", failures)
    if not found:
        raise IncompleteCriticalSetError("no critical points found")

    classified = [classify(M, f, x, nondegen_tol=nondegen_tol, grad_tol=grad_tol)
                  for x in found]
    classified.sort(key=lambda p: (round(p.value, 9), tuple(np.round(p.location, 9))))
    points = tuple(replace(p, id=i) for i, p in enumerate(classified))

    if len(points) > 1:
        closest = min(M.distance(a.location, b.location)
                      for i, a in enumerate(points) for b in points[i + 1:])
        pairing_radius = min(pairing_radius, 0.25 * closest)
    cset = CriticalSet(points, pairing_radius, M, f, seeds)
    chi = M.euler_characteristic
    if check_euler and chi is not None and cset.euler_characteristic() != chi:
        raise IncompleteCriticalSetError(
            f"alternating count {cset.euler_characteristic()} differs from the Euler "
            f"characteristic {chi}; counts by index {cset.counts()}")
    return cset


def critical_set_from_points(M: Manifold, f: ScalarExpression, locations: Sequence,
                             pairing_radius: float = 1e-3) -> CriticalSet:
    """Classify known critical locations (used by tests and the dual complex)."""
    pts = [classify(M, f, np.asarray(x, dtype=float), id=i) for i, x in enumerate(locations)]
    return CriticalSet(tuple(pts), pairing_radius, M, f)


def negated(cset: CriticalSet) -> CriticalSet:
    """Critical set of -f: same points and ids, index n - k."""
    from .expr import Neg
    M = cset.manifold
    g = ScalarExpression(Neg(cset.function.ast), cset.function.num_vars)
    pts = tuple(classify(M, g, p.location, id=p.id) for p in cset.points)
    return CriticalSet(pts, cset.pairing_radius, M, g, cset.seed_spec)
