"""Uphill gradient flows and the closed-form translation flow on S^n.

Trajectories are integrated with scipy's Dormand-Prince stepper.  After every
accepted step the state is pulled back onto the manifold and transported
frames are re-projected to the tangent space.  The state can be augmented
with a frame evolving by the variational equation and with running
integrals, which is how pullbacks and the homotopy operator are evaluated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import RK45

from .critical import CriticalPoint, CriticalSet
from .expr import FormExpression, ScalarExpression, eval_form
from .geometry import GeometryError, Manifold

__all__ = [
    "FlowError",
    "NonConvergent",
    "FlowSettings",
    "Trajectory",
    "GradientFlow",
    "Sphere17Flow",
    "limit",
    "transport",
    "pullback_form",
]


class FlowError(RuntimeError):
    pass


class NonConvergent(FlowError):
    pass


@dataclass(frozen=True)
class FlowSettings:
    rtol: float = 1e-9
    atol: float = 1e-11
    max_time: float = 200.0
    capture_radius: float = 1e-4


@dataclass
class Trajectory:
    times: np.ndarray
    points: np.ndarray
    status: str  # "converged" | "max_time" | "stopped" | "left_domain"
    direction: int
    limit: int | None = None
    deck: tuple[int, ...] | None = None  # end point lies near deck . limit location
    frame: np.ndarray | None = None
    integral: np.ndarray | None = None
    message: str = ""

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_rows(self) -> list[list[float]]:
        return [[float(t), *map(float, x)] for t, x in zip(self.times, self.points)]


class GradientFlow:
    """Flow of V = grad f (uphill) for the induced or flat metric.

    On implicit backends V extends off the manifold as grad f minus its
    component along grad c, which is tangent to every level set of c.
    """

    closed_form = False

    def __init__(self, M: Manifold, f: ScalarExpression, critical: CriticalSet | None = None,
                 settings: FlowSettings = FlowSettings()):
        if f.num_vars != M.ambient_dim:
            raise ValueError("function and manifold dimensions differ")
        self.manifold = M
        self.function = f
        self.critical = critical
        self.settings = settings
        self._f1 = f.jet_function(1)
        self._f2 = f.jet_function(2)
        if not M.is_quotient:
            self._c1 = M.constraint.jet_function(1)
            self._c2 = M.constraint.jet_function(2)
        self._scale = (max(float(np.max(np.abs(p.eigenvalues))) for p in critical.points)
                       if critical is not None else 1.0)

    def with_settings(self, **kw) -> "GradientFlow":
        from dataclasses import replace
        return GradientFlow(self.manifold, self.function, self.critical,
                            replace(self.settings, **kw))

    def reversed(self) -> "GradientFlow":
        """Uphill flow of -f (same critical set, roles of S and U swapped)."""
        from .expr import Neg
        neg = ScalarExpression(Neg(self.function.ast), self.function.num_vars)
        return GradientFlow(self.manifold, neg, None, self.settings)

    # -- vector field

    def velocity(self, x) -> np.ndarray:
        _, gf = self._f1(x)
        gf = np.array(gf)
        if self.manifold.is_quotient:
            return gf
        _, gc = self._c1(x)
        gc = np.array(gc)
        return gf - (gf @ gc) / (gc @ gc) * gc

    def velocity_and_jacobian(self, x) -> tuple[np.ndarray, np.ndarray]:
        _, gf, hf = self._f2(x)
        gf, hf = np.array(gf), np.array(hf)
        if self.manifold.is_quotient:
            return gf, hf
        _, gc, hc = self._c2(x)
        gc, hc = np.array(gc), np.array(hc)
        cc = gc @ gc
        fc = gf @ gc
        a = fc / cc
        grad_a = (hf @ gc + hc @ gf) / cc - 2.0 * fc * (hc @ gc) / cc**2
        return gf - a * gc, hf - np.outer(gc, grad_a) - a * hc

    def jacobian(self, x) -> np.ndarray:
        return self.velocity_and_jacobian(x)[1]

    # -- convergence test

    def _capture(self, x, direction: int, radius: float):
        """Critical point whose hyperbolic ball contains x, with deck word."""
        cs = self.critical
        if cs is None:
            return None
        M = self.manifold
        for p in cs.points:
            if M.is_quotient:
                lift, deck = M.nearest_lift(p.location, x)
                d = M.deck_linear(deck).T @ (x - lift)
            else:
                deck = None
                d = x - p.location
            if np.linalg.norm(d) >= radius:
                continue
            u, s = p.split(d)
            escaping = u if direction > 0 else s
            if escaping.size == 0 or np.linalg.norm(escaping) < 1e-2 * radius:
                return p, deck
        return None

    def integrate(self, x0, direction: int = 1, *, frame=None,
                  integrand: Callable | None = None, n_integrals: int = 0,
                  t_end: float | None = None, stop: Callable | None = None,
                  capture_radius: float | None = None, keep_path: bool = True,
                  first_step: float | None = None) -> Trajectory:
        """Integrate x' = direction * V(x).

        ``frame`` (k, N) tangent vectors at x0 follow the variational
        equation.  ``integrand(x, v, W)`` returns ``n_integrals`` values that
        are accumulated in time; ``v`` is V(x) (not multiplied by the
        direction) and ``W`` the current frame.  ``stop(t, x)`` ends the run
        early with status "stopped".
        """
        M = self.manifold
        settings = self.settings
        radius = settings.capture_radius if capture_radius is None else capture_radius
        sigma = 1.0 if direction > 0 else -1.0
        x0 = np.array(x0, dtype=float)
        N = M.ambient_dim
        W0 = np.zeros((0, N)) if frame is None else np.atleast_2d(np.array(frame, dtype=float))
        k = W0.shape[0]
        m = n_integrals if integrand is not None else 0
        need_jac = k > 0

        def rhs(t, y):
            x = y[:N]
            if need_jac:
                v, J = self.velocity_and_jacobian(x)
            else:
                v, J = self.velocity(x), None
            out = np.empty_like(y)
            out[:N] = sigma * v
            if k:
                W = y[N:N + k * N].reshape(k, N)
                out[N:N + k * N] = (sigma * (W @ J.T)).ravel()
            else:
                W = None
            if m:
                out[N + k * N:] = integrand(x, v, W)
            return out

        y0 = np.concatenate([x0, W0.ravel(), np.zeros(m)])
        bound = settings.max_time if t_end is None else t_end

        times = [0.0]
        points = [x0.copy()]

        if t_end is None:
            hit = self._capture(x0, direction, radius)
            if hit is not None:
                return self._finish(times, points, "converged", direction, y0, N, k, m, hit)
        if t_end == 0.0:
            return self._finish(times, points, "stopped", direction, y0, N, k, m, None)

        solver = RK45(rhs, 0.0, y0, bound, rtol=settings.rtol, atol=settings.atol,
                      first_step=first_step)
        threshold = 4.0 * self._scale * radius
        while solver.status == "running":
            msg = solver.step()
            if solver.status == "failed":
                raise FlowError(f"step size underflow at t={solver.t:.6g}, "
                                f"x={solver.y[:N].tolist()}: {msg}")
            y = solver.y
            if not M.is_quotient:
                try:
                    xr = M.retract(y[:N])
                except GeometryError as exc:
                    return self._finish(times, points, "left_domain", direction, y, N, k, m,
                                        None, str(exc))
                y[:N] = xr
                if k:
                    y[N:N + k * N] = M.tangent_project(xr, y[N:N + k * N].reshape(k, N)).ravel()
                solver.f = solver.fun(solver.t, y)
            x = y[:N]
            if keep_path:
                times.append(solver.t)
                points.append(x.copy())
            if stop is not None and stop(solver.t, x):
                return self._finish(times, points, "stopped", direction, y, N, k, m, None,
                                    t=solver.t, x=x)
            if t_end is None and np.linalg.norm(self.velocity(x)) < threshold:
                hit = self._capture(x, direction, radius)
                if hit is not None:
                    return self._finish(times, points, "converged", direction, y, N, k, m,
                                        hit, t=solver.t, x=x)
        status = "stopped" if t_end is not None else "max_time"
        return self._finish(times, points, status, direction, solver.y, N, k, m, None,
                            t=solver.t, x=solver.y[:N])

    def _finish(self, times, points, status, direction, y, N, k, m, hit, message="",
                t=None, x=None):
        if x is not None and (len(points) == 0 or points[-1] is not x):
            if times[-1] != t:
                times.append(t)
                points.append(np.array(x))
        frame = y[N:N + k * N].reshape(k, N).copy() if k else None
        integral = y[N + k * N:].copy() if m else None
        return Trajectory(
            times=np.array(times),
            points=np.array(points),
            status=status,
            direction=direction,
            limit=None if hit is None else hit[0].id,
            deck=None if hit is None else hit[1],
            frame=frame,
            integral=integral,
            message=message,
        )

    # -- closed-form helpers shared with Sphere17Flow

    def flow_map(self, t: float, x) -> np.ndarray:
        direction = 1 if t >= 0 else -1
        return self.integrate(x, direction, t_end=abs(t), keep_path=False).end

    def pushforward(self, t: float, x, vectors) -> tuple[np.ndarray, np.ndarray]:
        direction = 1 if t >= 0 else -1
        traj = self.integrate(x, direction, frame=vectors, t_end=abs(t), keep_path=False)
        return traj.end, traj.frame


def limit(flow: GradientFlow, x0, direction: int = 1, **kw) -> int:
    """Critical id of the forward (or backward) limit of x0."""
    traj = flow.integrate(x0, direction, keep_path=False, **kw)
    if not traj.converged:
        raise NonConvergent(
            f"no limit from {np.asarray(x0).tolist()} ({traj.status} at "
            f"t={traj.times[-1]:.3g}, end {traj.end.tolist()})")
    return traj.limit


def transport(flow, traj: Trajectory, frame) -> np.ndarray:
    """Push ``frame`` (tangent at the trajectory start) to the trajectory end."""
    frame = np.atleast_2d(np.asarray(frame, dtype=float))
    if not np.any(frame):
        return np.zeros_like(frame)
    t = float(traj.times[-1] - traj.times[0])
    if isinstance(flow, Sphere17Flow):
        return flow.pushforward(traj.direction * t, traj.points[0], frame)[1]
    again = flow.integrate(traj.points[0], traj.direction, frame=frame, t_end=t,
                           keep_path=False)
    return again.frame


def pullback_form(flow, alpha: FormExpression, t: float, x, vectors=()) -> float:
    """(phi_t^* alpha)(x) evaluated on tangent ``vectors`` at x."""
    if alpha.degree == 0:
        return float(alpha.coefficient_values(flow.flow_map(t, x))[0])
    y, W = flow.pushforward(t, x, vectors)
    return eval_form(alpha, y, W)


# --------------------------------------------------------------------------
# translation flow through the pole


class Sphere17Flow:
    """Translation y -> y + t u in the stereographic chart from the north pole.

    In the chart around the north pole (x = y / |y|^2) the same flow reads
    x -> |x|^2 (x + t|x|^2 u) / |x + t|x|^2 u|^2.  V vanishes only at the
    north pole.  Derivatives of the map are exact: the map is rational, so a
    complex-step directional derivative carries no truncation error.
    """

    closed_form = True
    _H = 1e-30

    def __init__(self, M: Manifold, u):
        if M.is_quotient or M.name != f"S{M.dim}":
            raise ValueError("the translation flow lives on the unit sphere backend")
        u = np.asarray(u, dtype=float)
        if u.shape != (M.dim,) or abs(np.linalg.norm(u) - 1.0) > 1e-12:
            raise ValueError("direction must be a unit vector in R^n")
        self.manifold = M
        self.u = u
        self.critical = None
        self.north = np.eye(M.ambient_dim)[-1]

    def _map(self, t, P: np.ndarray) -> np.ndarray:
        n = self.manifold.dim
        h = P[n]
        base = P[:n]
        if h.real > 0:
            x = base / (1.0 + h)
            r2 = np.sum(x * x)
            if r2.real == 0.0:
                return P.copy()
            z = x + t * r2 * self.u
            z2 = np.sum(z * z)
            if abs(z2) > 1e-300:
                xt = (r2 / z2) * z
                q = np.sum(xt * xt)
                return np.concatenate([2.0 * xt / (1.0 + q), [(1.0 - q) / (1.0 + q)]])
        y = base / (1.0 - h)
        yt = y + t * self.u
        q = np.sum(yt * yt)
        return np.concatenate([2.0 * yt / (1.0 + q), [(q - 1.0) / (1.0 + q)]])

    def flow_map(self, t: float, x) -> np.ndarray:
        return self._map(float(t), np.asarray(x, dtype=float))

    def velocity(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.imag(self._map(1j * self._H, x.astype(complex))) / self._H

    def differential(self, t: float, x, vectors) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        out = [np.imag(self._map(float(t), x + 1j * self._H * v)) / self._H for v in vectors]
        return np.array(out).reshape(vectors.shape)

    def pushforward(self, t: float, x, vectors) -> tuple[np.ndarray, np.ndarray]:
        return self.flow_map(t, x), self.differential(t, x, vectors)

    def integrate(self, x0, direction: int = 1, *, t_end: float = 10.0, samples: int = 200,
                  **_) -> Trajectory:
        """Sampled closed-form orbit; never "converges" in finite time."""
        ts = np.linspace(0.0, t_end, samples)
        pts = np.array([self.flow_map(direction * t, x0) for t in ts])
        return Trajectory(ts, pts, "stopped", direction)
