"""Manifold backends: implicit hypersurfaces in R^N and flat quotients of R^n.

Points on an implicit backend are ambient coordinates.  Points on a flat
quotient are coordinates in the covering space R^n; :meth:`FlatQuotient.reduce`
maps them to the fundamental domain and reports the deck element used, which
is how flow lines acquire their deck words.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expr import ScalarExpression, parse

__all__ = [
    "GeometryError",
    "ImplicitHypersurface",
    "FlatQuotient",
    "TangentFrame",
    "Manifold",
    "sphere",
    "circle",
    "torus",
    "klein",
    "make_manifold",
]


class GeometryError(RuntimeError):
    pass


@dataclass(frozen=True)
class TangentFrame:
    base_point: np.ndarray
    vectors: np.ndarray  # shape (k, N): one tangent vector per row
    orientation_sign: int | None = None

    @property
    def size(self) -> int:
        return self.vectors.shape[0]


class ImplicitHypersurface:
    """Regular level set {c = 0} in R^N with the induced metric.

    A tangent frame (v1, ..., vn) is positive when (n_hat, v1, ..., vn) is a
    positive basis of R^N, n_hat the outward unit normal grad c / |grad c|.
    """

    is_quotient = False
    orientable = True

    def __init__(self, constraint: ScalarExpression, name: str = "hypersurface",
                 euler_characteristic: int | None = None):
        self.constraint = constraint
        self.ambient_dim = constraint.num_vars
        self.dim = self.ambient_dim - 1
        self.name = name
        self.euler_characteristic = euler_characteristic
        self._c1 = constraint.jet_function(1)
        self._c2 = constraint.jet_function(2)

    def __repr__(self):
        return f"ImplicitHypersurface({self.name}, dim={self.dim})"

    # -- basic geometry

    def constraint_gradient(self, x) -> np.ndarray:
        return np.array(self._c1(x)[1])

    def normal(self, x) -> np.ndarray:
        g = self.constraint_gradient(x)
        norm = np.linalg.norm(g)
        if norm < 1e-8:
            raise GeometryError(f"constraint is singular at {np.asarray(x).tolist()}")
        return g / norm

    def retract(self, x, tol: float = 1e-12, max_steps: int = 50) -> np.ndarray:
        x = np.array(x, dtype=float)
        for _ in range(max_steps):
            c, g = self._c1(x)
            g = np.array(g)
            if abs(c) < tol:
                if np.linalg.norm(g) < 1e-8:
                    raise GeometryError("retraction reached a singular point")
                return x
            gg = float(g @ g)
            if gg < 1e-16:
                raise GeometryError("retraction reached a singular point")
            x = x - (c / gg) * g
        c = self._c1(x)[0]
        if abs(c) < tol:
            return x
        raise GeometryError(f"retraction did not converge (|c| = {abs(c):.3e})")

    def tangent_project(self, x, v) -> np.ndarray:
        n = self.normal(x)
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            return v - (v @ n) * n
        return v - np.outer(v @ n, n)

    def tangent_basis(self, x) -> np.ndarray:
        """Positively oriented orthonormal basis of T_xM, rows of an (n, N) array."""
        n = self.normal(x)
        # QR of [n | e_1 ... e_N] ordered so the pivot column is well conditioned
        order = np.argsort(-np.abs(n))
        m = np.column_stack([n] + [np.eye(self.ambient_dim)[i] for i in order[1:]])
        q, _ = np.linalg.qr(m)
        if q[:, 0] @ n < 0:
            q[:, 0] = -q[:, 0]
        basis = q[:, 1:].T.copy()
        if np.linalg.det(np.vstack([n, basis])) < 0:
            basis[-1] = -basis[-1]
        return basis

    def chart(self, x, basis=None):
        """Graph chart y -> z = x + basis^T y + t(y) n_hat(x) over T_xM.

        Returns a function giving the point and its exact Jacobian, one
        column per chart coordinate."""
        x = np.asarray(x, dtype=float)
        B = self.tangent_basis(x) if basis is None else np.atleast_2d(basis)
        n = self.normal(x)
        c1 = self._c1

        def psi(y):
            base = x + B.T @ np.asarray(y, dtype=float)
            t = 0.0
            for _ in range(50):
                c, g = c1(base + t * n)
                gn = float(np.dot(g, n))
                if abs(c) < 1e-14:
                    break
                t -= c / gn
            z = base + t * n
            g = np.array(c1(z)[1])
            dt = -(B @ g) / (g @ n)
            return z, B.T + np.outer(n, dt)

        return psi

    def orientation_sign(self, x, vectors) -> int:
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        if vectors.shape != (self.dim, self.ambient_dim):
            raise GeometryError("orientation needs a full tangent frame")
        det = np.linalg.det(np.vstack([self.normal(x), vectors]))
        return 1 if det > 0 else -1

    def to_tangent_coordinates(self, x, v) -> np.ndarray:
        return self.tangent_basis(x) @ np.asarray(v, dtype=float)

    # -- calculus of f restricted to M

    def riemannian_gradient(self, f: ScalarExpression, x) -> np.ndarray:
        return self.tangent_project(x, f.jet_function(1)(x)[1])

    def tangent_hessian(self, f: ScalarExpression, x, basis=None, check: bool = True,
                        grad_tol: float = 1e-6) -> np.ndarray:
        """Hessian of f|_M in an orthonormal tangent basis.

        Uses the Lagrangian correction, which is the intrinsic Hessian only at
        critical points; elsewhere it is the Newton model used by the search.
        """
        _, gf, hf = f.jet_function(2)(x)
        _, gc, hc = self._c2(x)
        gf, gc = np.array(gf), np.array(gc)
        mu = (gf @ gc) / (gc @ gc)
        if check:
            proj = gf - mu * gc
            if np.linalg.norm(proj) > grad_tol:
                raise GeometryError(
                    f"tangent_hessian requested at a non-critical point "
                    f"(|grad| = {np.linalg.norm(proj):.3e})")
        if basis is None:
            basis = self.tangent_basis(x)
        h = basis @ (np.array(hf) - mu * np.array(hc)) @ basis.T
        return 0.5 * (h + h.T)

    def distance(self, a, b) -> float:
        return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))

    def random_points(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Gaussian points pushed onto M; exact for round spheres."""
        pts = rng.standard_normal((count, self.ambient_dim))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        return np.array([self.retract(p) for p in pts])

    def grid_points(self, counts: Sequence[int]) -> np.ndarray:
        """Deterministic seeds: a latitude/longitude style grid on the unit sphere."""
        counts = list(counts) + [counts[-1]] * (self.dim - len(counts))
        axes = [(np.arange(c) + 0.5) / c for c in counts[: self.dim]]
        pts = []
        for u in np.array(np.meshgrid(*axes, indexing="ij")).reshape(self.dim, -1).T:
            pts.append(self.retract(_sphere_param(u)))
        return np.array(pts)


def _sphere_param(u: np.ndarray) -> np.ndarray:
    """Map [0,1)^n onto S^n via nested spherical coordinates."""
    n = len(u)
    angles = [math.pi * t for t in u[:-1]] + [2 * math.pi * u[-1]]
    x = np.ones(n + 1)
    for i, a in enumerate(angles[:-1]):
        x[i] *= math.cos(a)
        x[i + 1:] *= math.sin(a)
    x[n - 1] *= math.cos(angles[-1])
    x[n] *= math.sin(angles[-1])
    return x


class FlatQuotient:
    """R^n modulo a lattice (torus) or the Klein bottle group, flat metric.

    Deck words are integer tuples.  Torus: a translation vector.  Klein:
    ``(k, m)`` acting by ``(x, y) -> (x + k/2, (-1)^k y + m)``.
    """

    is_quotient = True

    def __init__(self, kind: str, dim: int = 2):
        if kind not in ("torus", "klein"):
            raise GeometryError(f"unknown quotient kind {kind!r}")
        if kind == "klein" and dim != 2:
            raise GeometryError("the Klein bottle is two-dimensional")
        self.kind = kind
        self.dim = dim
        self.ambient_dim = dim
        self.name = kind if kind == "klein" else f"T{dim}"
        self.orientable = kind == "torus"
        self.euler_characteristic = 0
        self.domain = np.ones(dim) if kind == "torus" else np.array([0.5, 1.0])

    def __repr__(self):
        return f"FlatQuotient({self.kind}, dim={self.dim})"

    @property
    def identity(self) -> tuple[int, ...]:
        return (0,) * self.dim

    @property
    def generators(self) -> list[tuple[int, ...]]:
        """Words for pi_1 generators: coordinate loops (torus) or (glide, y-loop)."""
        return [tuple(int(i == j) for j in range(self.dim)) for i in range(self.dim)]

    # -- group bookkeeping

    def deck_apply(self, word, x) -> np.ndarray:
        x = np.array(x, dtype=float)
        if self.kind == "torus":
            return x + np.asarray(word, dtype=float)
        k, m = word
        return np.array([x[0] + 0.5 * k, (-1) ** (k % 2) * x[1] + m])

    def deck_linear(self, word) -> np.ndarray:
        if self.kind == "torus":
            return np.eye(self.dim)
        return np.diag([1.0, (-1.0) ** (word[0] % 2)])

    def deck_compose(self, a, b) -> tuple[int, ...]:
        """Word for ``a`` applied after ``b``."""
        if self.kind == "torus":
            return tuple(int(i + j) for i, j in zip(a, b))
        s = (-1) ** (a[0] % 2)
        return (a[0] + b[0], s * b[1] + a[1])

    def deck_inverse(self, a) -> tuple[int, ...]:
        if self.kind == "torus":
            return tuple(-int(i) for i in a)
        s = (-1) ** (a[0] % 2)
        return (-a[0], -s * a[1])

    def reduce(self, x) -> tuple[np.ndarray, tuple[int, ...]]:
        """Return ``(y, g)`` with ``y = g . x`` in the fundamental domain."""
        x = np.array(x, dtype=float)
        if self.kind == "torus":
            shift = -np.floor(x)
            y = x + shift
            wrap = y >= 1.0
            y[wrap] -= 1.0
            shift[wrap] -= 1.0
            return y, tuple(int(s) for s in shift)
        k = -int(math.floor(2.0 * x[0]))
        x0 = x[0] + 0.5 * k
        if x0 >= 0.5:
            k -= 1
            x0 -= 0.5
        y1 = (-1) ** (k % 2) * x[1]
        m = -int(math.floor(y1))
        y1 += m
        if y1 >= 1.0:
            m -= 1
            y1 -= 1.0
        return np.array([x0, y1]), (k, m)

    def retract(self, x) -> np.ndarray:
        return self.reduce(x)[0]

    def nearest_lift(self, target, reference) -> tuple[np.ndarray, tuple[int, ...]]:
        """Deck image ``g . target`` closest to ``reference``, with ``g``."""
        target = np.asarray(target, dtype=float)
        reference = np.asarray(reference, dtype=float)
        if self.kind == "torus":
            g = tuple(int(v) for v in np.round(reference - target))
            return self.deck_apply(g, target), g
        best = None
        base_k = int(round(2.0 * (reference[0] - target[0])))
        for k in range(base_k - 1, base_k + 2):
            s = (-1) ** (k % 2)
            m = int(round(reference[1] - s * target[1]))
            for mm in (m - 1, m, m + 1):
                img = self.deck_apply((k, mm), target)
                d = float(np.linalg.norm(img - reference))
                if best is None or d < best[0]:
                    best = (d, img, (k, mm))
        return best[1], best[2]

    def distance(self, a, b) -> float:
        img, _ = self.nearest_lift(b, a)
        return float(np.linalg.norm(img - np.asarray(a, dtype=float)))

    # -- flat geometry

    def tangent_project(self, x, v) -> np.ndarray:
        return np.array(v, dtype=float)

    def tangent_basis(self, x) -> np.ndarray:
        return np.eye(self.dim)

    def to_tangent_coordinates(self, x, v) -> np.ndarray:
        return np.asarray(v, dtype=float)

    def chart(self, x, basis=None):
        x = np.asarray(x, dtype=float)
        B = np.eye(self.dim) if basis is None else np.atleast_2d(basis)

        def psi(y):
            return x + B.T @ np.asarray(y, dtype=float), B.T.copy()

        return psi

    def orientation_sign(self, x, vectors) -> int:
        if not self.orientable:
            raise GeometryError("the Klein bottle is not orientable")
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        if vectors.shape != (self.dim, self.dim):
            raise GeometryError("orientation needs a full tangent frame")
        return 1 if np.linalg.det(vectors) > 0 else -1

    def riemannian_gradient(self, f: ScalarExpression, x) -> np.ndarray:
        return np.array(f.jet_function(1)(x)[1])

    def tangent_hessian(self, f: ScalarExpression, x, basis=None, check: bool = True,
                        grad_tol: float = 1e-6) -> np.ndarray:
        _, g, h = f.jet_function(2)(x)
        if check and np.linalg.norm(g) > grad_tol:
            raise GeometryError(
                f"tangent_hessian requested at a non-critical point "
                f"(|grad| = {np.linalg.norm(g):.3e})")
        h = np.array(h)
        if basis is not None:
            h = basis @ h @ basis.T
        return 0.5 * (h + h.T)

    def random_points(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return rng.random((count, self.dim)) * self.domain

    def grid_points(self, counts: Sequence[int]) -> np.ndarray:
        counts = list(counts) + [counts[-1]] * (self.dim - len(counts))
        axes = [np.arange(c) / c * self.domain[i] for i, c in enumerate(counts[: self.dim])]
        return np.array(np.meshgrid(*axes, indexing="ij")).reshape(self.dim, -1).T.copy()


Manifold = ImplicitHypersurface | FlatQuotient


def sphere(n: int = 2) -> ImplicitHypersurface:
    c = parse(" + ".join(f"x{i + 1}^2" for i in range(n + 1)) + " - 1", n + 1)
    return ImplicitHypersurface(c, name=f"S{n}", euler_characteristic=1 + (-1) ** n)


def circle() -> ImplicitHypersurface:
    return sphere(1)


def torus(n: int = 2) -> FlatQuotient:
    return FlatQuotient("torus", n)


def klein() -> FlatQuotient:
    return FlatQuotient("klein", 2)


def make_manifold(kind: str, dim: int | None = None) -> Manifold:
    if kind == "sphere":
        return sphere(2 if dim is None else dim)
    if kind == "circle":
        return circle()
    if kind == "torus":
        return torus(2 if dim is None else dim)
    if kind == "klein":
        return klein()
    raise GeometryError(f"unknown manifold kind {kind!r}")
