"""Residues, the operators P and T, and numerical checks of the identities
relating them.

Integrals over U_p (or S_p) use the sweep parametrization: a small disk of
radius eps0 in the unstable (stable) eigenspace, mapped onto M through an
exact graph chart, plus the surface traced by its boundary sphere under the
forward (backward) flow.  The flow part carries a transported frame, so the
pullback of the form is evaluated exactly along each trajectory and only the
sphere of directions needs quadrature.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.integrate import quad

from .critical import CriticalPoint, CriticalSet
from .expr import FormExpression, eval_form, exterior_derivative, wedge
from .flow import FlowError, GradientFlow, NonConvergent, Sphere17Flow
from .geometry import Manifold

log = logging.getLogger(__name__)

__all__ = [
    "QuadratureError",
    "ResidueVector",
    "CurrentSum",
    "integrate_over_unstable",
    "integrate_over_stable",
    "residues",
    "P_apply",
    "T_apply_pointwise",
    "admissible_samples",
    "verify_fme",
    "verify_P_chain_map",
    "pairing",
    "pairing_matrix",
    "integrate_over_manifold",
    "check_integral_residues",
]

_GOLDEN = 0.3819660112501051


class QuadratureError(RuntimeError):
    def __init__(self, message: str, partial: float | None = None):
        super().__init__(message)
        self.partial = partial


@dataclass
class ResidueVector:
    degree: int
    residues: dict[int, float] = field(default_factory=dict)
    coresidues: dict[int, float] = field(default_factory=dict)
    errors: dict[int, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "degree": self.degree,
            "residues": {str(k): v for k, v in sorted(self.residues.items())},
            "coresidues": {str(k): v for k, v in sorted(self.coresidues.items())},
        }


@dataclass
class CurrentSum:
    """Formal sum of coefficient * [S_p] (role "stable") or [U_p] ("unstable")."""

    terms: list[tuple[float, int, str]] = field(default_factory=list)

    def __post_init__(self):
        ids = [(i, r) for _, i, r in self.terms]
        if len(set(ids)) != len(ids):
            raise ValueError("generators in a current sum must be distinct")

    def coefficient(self, pid: int) -> float:
        return next((c for c, i, _ in self.terms if i == pid), 0.0)

    def __len__(self):
        return len(self.terms)

    def as_list(self) -> list[dict]:
        return [{"coefficient": c, "generator": i, "role": r} for c, i, r in self.terms]


# --------------------------------------------------------------------------
# sweep integrals over U_p and S_p


def _limit_point(flow, traj) -> np.ndarray:
    p = flow.critical[traj.limit]
    if flow.manifold.is_quotient:
        return flow.manifold.deck_apply(traj.deck, p.location)
    return p.location


def _sweep_point(M, p, frame, eps0):
    """Chart over the span of ``frame`` at p: y -> (point, Jacobian columns)."""
    basis = M.tangent_basis(p.location)
    coords = frame @ basis.T  # frame vectors in tangent-basis coordinates
    psi = M.chart(p.location, basis)

    def point(y):
        z, J = psi(np.asarray(y) @ coords)
        return z, J @ coords.T

    return point


def _curve_integral(flow, p, form, e0, direction, eps0, capture):
    """Integral over the oriented curve through p tangent to e0."""
    M = flow.manifold
    chart = _sweep_point(M, p, e0[None, :], eps0)
    nodes, weights = np.polynomial.legendre.leggauss(8)
    disk = 0.0
    for s, w in zip(eps0 * nodes, eps0 * weights):
        z, J = chart([s])
        disk += w * eval_form(form, z, J.T)
    total = disk
    for sgn in (1.0, -1.0):
        z0, _ = chart([sgn * eps0])
        traj = flow.integrate(
            z0, direction, capture_radius=capture, keep_path=False, n_integrals=1,
            integrand=lambda x, v, W: [eval_form(form, x, [direction * v])])
        if not traj.converged:
            raise QuadratureError(f"branch from critical point {p.id} did not converge",
                                  partial=total)
        branch = traj.integral[0] + eval_form(form, traj.end, [_limit_point(flow, traj) - traj.end])
        total += sgn * branch
    return total


def _label(flow, x, direction):
    traj = flow.integrate(x, direction, keep_path=False)
    return (traj.limit, traj.deck) if traj.converged else ("nc",)


def _basin_radius(flow, p, chart, direction, eps0, r_max=0.4, probes=24):
    """Radius of a chart disk about p lying in the open cell of p.

    Used when the cell is top-dimensional, where any disk inside the basin is
    part of the cell.  Starting the sweep on a wide circle keeps strongly
    anisotropic critical points from crowding the swept area into a
    vanishingly thin angular window."""
    M = flow.manifold
    others = [M.distance(p.location, q.location) for q in flow.critical.points if q.id != p.id]
    r = min([r_max] + [0.45 * d for d in others])
    ref = _label(flow, chart([0.5 * eps0, 0.0])[0], -direction)
    thetas = 2 * math.pi * (np.arange(probes) + _GOLDEN) / probes
    while r > eps0:
        if all(_label(flow, chart([r * math.cos(t), r * math.sin(t)])[0], -direction) == ref
               for t in thetas):
            return r
        r *= 0.5
    return eps0


def _separatrix_angles(flow, p, frame, radius, direction):
    """Angles on the sweep circle about p hit by one-dimensional invariant
    curves of index-one points that end at p.  Sweep orbits through those
    angles run into a saddle, so the shell integrand has a cusp there."""
    M = flow.manifold
    B = M.tangent_basis(p.location)
    coords = frame @ B.T
    out = []
    for q in flow.critical.points:
        if q.index != 1 or M.dim != 2:
            continue
        vec = (q.stable_frame if direction > 0 else q.unstable_frame).vectors[0]
        for sgn in (1.0, -1.0):
            x = q.location + 1e-4 * sgn * vec
            x = x if M.is_quotient else M.retract(x)
            traj = flow.integrate(x, -direction)
            if not traj.converged or traj.limit != p.id:
                continue
            ys = []
            for z in traj.points:
                if M.is_quotient:
                    lift, deck = M.nearest_lift(p.location, z)
                    d = M.deck_linear(deck).T @ (z - lift)
                else:
                    d = z - p.location
                ys.append(np.linalg.solve(coords.T, B @ d))
            rs = [np.linalg.norm(y) for y in ys]
            for i in range(len(ys) - 1):
                if rs[i] > radius >= rs[i + 1]:
                    t = (rs[i] - radius) / (rs[i] - rs[i + 1])
                    y = ys[i] + t * (ys[i + 1] - ys[i])
                    out.append(math.atan2(y[1], y[0]) % (2 * math.pi))
                    break
    return out


def _surface_integral(flow, p, form, frame, direction, eps0, capture, rtol):
    """Integral over the oriented surface through p tangent to the two rows
    of ``frame``: polar disk plus the flow-swept annulus."""
    M = flow.manifold
    chart = _sweep_point(M, p, frame, eps0)
    if frame.shape[0] == M.dim:
        eps0 = _basin_radius(flow, p, chart, direction, eps0)

    # disk: Gauss in r, trapezoid in theta
    rn, rw = np.polynomial.legendre.leggauss(16)
    rn, rw = 0.5 * eps0 * (rn + 1), 0.5 * eps0 * rw
    nt = 64
    disk = 0.0
    for r, wr in zip(rn, rw):
        for th in 2 * math.pi * np.arange(nt) / nt:
            c, s = math.cos(th), math.sin(th)
            z, J = chart([r * c, r * s])
            d_r = J @ np.array([c, s])
            d_th = J @ np.array([-r * s, r * c])
            disk += wr * (2 * math.pi / nt) * eval_form(form, z, [d_r, d_th])

    def shell(theta):
        c, s = math.cos(theta), math.sin(theta)
        z, J = chart([eps0 * c, eps0 * s])
        w0 = J @ np.array([-eps0 * s, eps0 * c])
        traj = flow.integrate(
            z, direction, frame=[w0], capture_radius=capture, keep_path=False,
            n_integrals=1,
            integrand=lambda x, v, W: [eval_form(form, x, [direction * v, W[0]])])
        if not traj.converged:
            raise QuadratureError(f"shell at angle {theta:.6f} from {p.id} did not converge")
        return traj.integral[0]

    boundaries = _basin_boundaries(flow, chart, eps0, direction)
    if frame.shape[0] == M.dim:
        for t in _separatrix_angles(flow, p, frame, eps0, direction):
            if all(abs((t - b + math.pi) % (2 * math.pi) - math.pi) > 1e-6 for b in boundaries):
                boundaries.append(t)
        boundaries.sort()
    if not boundaries:
        # nested periodic trapezoid rules, offset off the symmetry axes
        total, n = None, 8
        vals = [shell(2 * math.pi * (j + _GOLDEN) / n) for j in range(n)]
        while n <= 1024:
            if total is not None:
                fresh = [shell(2 * math.pi * (j + 0.5 + _GOLDEN) / n) for j in range(n)]
                vals = [v for pair in zip(vals, fresh) for v in pair]
                n *= 2
            est = 2 * math.pi * float(np.mean(vals))
            if total is not None and abs(est - total) <= rtol * max(1.0, abs(est)):
                return disk + est
            total = est
        raise QuadratureError("shell quadrature did not converge", partial=disk + total)
    edges = boundaries + [boundaries[0] + 2 * math.pi]
    return disk + sum(_sector(shell, a, b, rtol) for a, b in zip(edges, edges[1:]))


def _endpoint_order(g, end, inward, length):
    """Substitution order at one end of a sector.

    Near a saddle-type end g ~ C delta^(-a) + regular, with a set by the
    eigenvalue ratio there; delta ~ u^q with q and q (1 - a) integers makes
    both parts polynomial in u.  The exponent is read off three probes."""
    g1, g2, g3 = (g(end + inward * d * length) for d in (1e-5, 1e-7, 1e-9))
    # differences cancel the regular part of g
    lo, hi = g2 - g1, g3 - g2
    if not (lo and hi) or lo * hi < 0 or not math.isfinite(lo * hi):
        return 3.0
    a = math.log(abs(hi / lo)) / math.log(100.0)
    s = 1 - min(a, 0.9)
    # integer q keeps the regular part of g polynomial in u as well
    for q in range(1, 11):
        if round(q * s) >= 1 and abs(q * s - round(q * s)) < 0.02:
            return float(q)
    return float(min(10, math.ceil(3 / s)))


def _sector(g, a, b, rtol, tol=1e-7):
    """Integral of g over [a, b] where g may blow up like a power of the
    distance to either end (orbits through a saddle).  theta = a + (b - a)
    phi(u), phi the regularized incomplete beta function whose orders match
    the end behaviour; Gauss-Legendre in u, doubled until two rules (or the
    Aitken extrapolation of the last three) agree."""
    q0 = _endpoint_order(g, a, 1.0, b - a)
    q1 = _endpoint_order(g, b, -1.0, b - a)
    norm = special.beta(q0, q1)

    def rule(n):
        u, w = np.polynomial.legendre.leggauss(n)
        u, w = 0.5 * (u + 1), 0.5 * w
        dphi = u ** (q0 - 1) * (1 - u) ** (q1 - 1) / norm
        total = 0.0
        for ui, wi, di in zip(u, w, dphi):
            # measure from the nearer end to keep the offset exact
            if ui < 0.5:
                t = a + (b - a) * special.betainc(q0, q1, ui)
            else:
                t = b - (b - a) * special.betainc(q1, q0, 1 - ui)
            total += wi * di * g(t)
        return (b - a) * total

    seq = [rule(8)]
    for n in (16, 32, 64, 128):
        cur = rule(n)
        if abs(cur - seq[-1]) <= max(tol, rtol * abs(cur)):
            return cur
        seq.append(cur)
        if len(seq) >= 3:
            d1, d2 = seq[-2] - seq[-3], seq[-1] - seq[-2]
            if d1 != d2 and abs(d2) < abs(d1):
                est = seq[-1] - d2 * d2 / (d2 - d1)
                if abs(est - cur) <= max(tol, rtol * abs(est)):
                    return est
    raise QuadratureError("sector quadrature did not converge", partial=seq[-1])


def _basin_boundaries(flow, chart, eps0, direction, samples=32, tol=1e-12):
    """Angles on the eps0-circle where the limit (with deck word) changes."""
    def at(theta):
        z, _ = chart([eps0 * math.cos(theta), eps0 * math.sin(theta)])
        return _label(flow, z, direction)

    thetas = 2 * math.pi * (np.arange(samples) + _GOLDEN) / samples
    labels = [at(t) for t in thetas]
    found = []
    for i in range(samples):
        lo = thetas[i]
        hi = thetas[i + 1] if i + 1 < samples else thetas[0] + 2 * math.pi
        la, lb = labels[i], labels[(i + 1) % samples]
        if la == lb:
            continue
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            lm = at(mid)
            if lm == la:
                lo = mid
            else:
                hi = mid
        found.append(0.5 * (lo + hi) % (2 * math.pi))
    found.sort()
    merged = []
    for t in found:
        if not merged or t - merged[-1] > 1e-9:
            merged.append(t)
    return merged


def _manifold_integral(flow, p: CriticalPoint, form: FormExpression, frame: np.ndarray,
                       direction: int, eps0: float, capture: float, rtol: float) -> float:
    m = frame.shape[0]
    if form.degree != m:
        return 0.0
    if m == 0:
        # a point, positively oriented by the convention on (U_p, S_p)
        return eval_form(form, p.location, [])
    if m == 1:
        return _curve_integral(flow, p, form, frame[0], direction, eps0, capture)
    M = flow.manifold
    if m == M.dim and M.orientable:
        # the cell of the only extremum of its kind has full measure
        extremal = [q for q in flow.critical.points if q.index == p.index]
        if len(extremal) == 1:
            return M.orientation_sign(p.location, frame) * integrate_over_manifold(M, form)
    if m == 2:
        return _surface_integral(flow, p, form, frame, direction, eps0, capture, rtol)
    raise NotImplementedError("sweep integrals are implemented up to dimension 2")


def integrate_over_unstable(flow: GradientFlow, p: CriticalPoint, alpha: FormExpression,
                            eps0: float = 1e-3, capture: float = 1e-9,
                            rtol: float = 1e-8) -> float:
    """r_p(alpha): integral of alpha over U_p, or 0 for unmatched degree."""
    return _manifold_integral(flow, p, alpha, p.unstable_frame.vectors, 1, eps0, capture, rtol)


def integrate_over_stable(flow: GradientFlow, p: CriticalPoint, beta: FormExpression,
                          eps0: float = 1e-3, capture: float = 1e-9,
                          rtol: float = 1e-8) -> float:
    """s_p(beta): integral of beta over S_p, or 0 for unmatched degree."""
    return _manifold_integral(flow, p, beta, p.stable_frame.vectors, -1, eps0, capture, rtol)


def residues(flow: GradientFlow, alpha: FormExpression, **kw) -> ResidueVector:
    n = flow.manifold.dim
    k = alpha.degree
    out = ResidueVector(k)
    for p in flow.critical.points:
        if n - p.index == k:
            out.residues[p.id] = integrate_over_unstable(flow, p, alpha, **kw)
        if p.index == k:
            out.coresidues[p.id] = integrate_over_stable(flow, p, alpha, **kw)
    return out


def P_apply(flow: GradientFlow, alpha: FormExpression, **kw) -> CurrentSum:
    """P(alpha) = sum over p with n - index = deg alpha of r_p(alpha) [S_p]."""
    n = flow.manifold.dim
    terms = [(integrate_over_unstable(flow, p, alpha, **kw), p.id, "stable")
             for p in flow.critical.points if n - p.index == alpha.degree]
    return CurrentSum(terms)


# --------------------------------------------------------------------------
# the homotopy operator T


def T_apply_pointwise(flow, alpha: FormExpression, x, vectors=(), capture: float = 1e-9) -> float:
    """T(alpha)(x) = -int_0^inf (phi_s^* i_V alpha)(x) ds on ``vectors``.

    ``vectors`` are deg(alpha) - 1 tangent vectors at x.
    """
    k = alpha.degree
    if k == 0:
        return 0.0
    vectors = np.zeros((0, len(x))) if k == 1 else np.atleast_2d(np.asarray(vectors, dtype=float))
    if vectors.shape[0] != k - 1:
        raise ValueError(f"T of a {k}-form takes {k - 1} vectors")
    x = np.asarray(x, dtype=float)
    if isinstance(flow, Sphere17Flow):
        def integrand(s):
            y = flow.flow_map(s, x)
            W = flow.differential(s, x, vectors) if k > 1 else []
            return eval_form(alpha, y, [flow.velocity(y), *W])

        val, _ = quad(integrand, 0.0, np.inf, epsabs=1e-13, epsrel=1e-11, limit=500)
        return -val
    traj = flow.integrate(
        x, 1, frame=vectors if k > 1 else None, capture_radius=capture, keep_path=False,
        n_integrals=1,
        integrand=lambda z, v, W: [eval_form(alpha, z, [v] if W is None else [v, *W])])
    if not traj.converged:
        raise NonConvergent(f"forward orbit of {x.tolist()} did not converge")
    val = traj.integral[0]
    if k == 1:
        val += eval_form(alpha, traj.end, [_limit_point(flow, traj) - traj.end])
    return -val


def _stable_polylines(flow, spacing: float = 2e-3) -> list[np.ndarray]:
    """Sampled lower-dimensional stable manifolds (points and curves)."""
    M = flow.manifold
    out = []
    for p in flow.critical.points:
        if p.index == M.dim:
            continue
        if p.index == 0:
            out.append(p.location[None, :])
            continue
        if p.index > 1:
            raise NotImplementedError("admissibility margins need stable sets of dimension <= 1")
        for sgn in (1.0, -1.0):
            x = p.location + 1e-4 * sgn * p.stable_frame.vectors[0]
            x = x if M.is_quotient else M.retract(x)
            traj = flow.integrate(x, -1)
            pts = [p.location]
            for a, b in zip(traj.points[:-1], traj.points[1:]):
                steps = max(1, int(np.linalg.norm(b - a) / spacing))
                pts.extend(a + (b - a) * t for t in np.arange(steps) / steps)
            pts.append(traj.points[-1])
            out.append(np.array(pts))
    return out


def admissible_samples(flow, count: int, margin: float = 1e-2, seed: int = 7) -> np.ndarray:
    """Random points at distance > margin from every critical point and every
    stable manifold of non-maximal index."""
    M = flow.manifold
    rng = np.random.default_rng(seed)
    if isinstance(flow, Sphere17Flow):
        avoid = [flow.north[None, :]]
    else:
        avoid = _stable_polylines(flow)
        avoid.append(np.array([p.location for p in flow.critical.points]))
    chosen = []
    while len(chosen) < count:
        for x in M.random_points(4 * count, rng):
            if M.is_quotient:
                ok = all(min(M.distance(x, y) for y in pts) > margin for pts in avoid)
            else:
                ok = all(np.min(np.linalg.norm(pts - x, axis=1)) > margin for pts in avoid)
            if ok:
                chosen.append(x)
                if len(chosen) == count:
                    break
    return np.array(chosen)


def verify_fme(flow, alpha: FormExpression, samples, h: float = 1e-4,
               capture: float = 1e-9, mapper=map) -> dict:
    """Residual of d T(alpha) + T(d alpha) = alpha - P(alpha) at sample points.

    P(alpha) vanishes at admissible points for deg alpha >= 1.  d T(alpha) is
    formed by central differences of T(alpha) in an exact chart.
    """
    k = alpha.degree
    if k < 1:
        raise ValueError("pointwise check needs a form of positive degree")
    M = flow.manifold
    n = M.dim
    dalpha = exterior_derivative(alpha) if k < M.ambient_dim else None

    def residual(x):
        psi = M.chart(x)
        _, J0 = psi(np.zeros(n))
        worst = 0.0
        for I in itertools.combinations(range(n), k):
            frame = J0[:, I].T
            d_t = 0.0
            for a, i in enumerate(I):
                rest = [j for j in I if j != i]
                diff = 0.0
                for sgn in (1.0, -1.0):
                    y = np.zeros(n)
                    y[i] = sgn * h
                    z, J = psi(y)
                    diff += sgn * T_apply_pointwise(flow, alpha, z, J[:, rest].T, capture)
                d_t += (-1) ** a * diff / (2 * h)
            t_d = 0.0
            if dalpha is not None:
                t_d = T_apply_pointwise(flow, dalpha, x, frame, capture)
            lhs = d_t + t_d
            rhs = eval_form(alpha, x, frame)
            worst = max(worst, abs(lhs - rhs))
        return {"point": [float(v) for v in x], "residual": worst}

    rows = list(mapper(residual, np.atleast_2d(samples)))
    return {"max_residual": max(r["residual"] for r in rows), "samples": rows}


# --------------------------------------------------------------------------
# chain map, pairing, global integrals


def verify_P_chain_map(flow, critical: CriticalSet, C, beta: FormExpression, **kw) -> dict:
    """Check sum_p r_p(beta) n_pq = r_q(d beta) for each q of index one less."""
    n = flow.manifold.dim
    lam = n - beta.degree
    rows = []
    if lam < 1:
        return {"max_residual": 0.0, "rows": rows}
    dbeta = exterior_derivative(beta)
    top = [p for p in critical.points if p.index == lam]
    if not top:
        return {"max_residual": 0.0, "rows": rows}
    r_top = {p.id: integrate_over_unstable(flow, p, beta, **kw) for p in top}
    D = C.matrix(lam)
    gens_lo, gens_hi = C.generators[lam - 1], C.generators[lam]
    for i, qid in enumerate(gens_lo):
        q = critical[qid]
        lhs = sum(r_top[pid] * int(D[i, j]) for j, pid in enumerate(gens_hi))
        rhs = integrate_over_unstable(flow, q, dbeta, **kw)
        rows.append({"q": qid, "lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs)})
    return {"max_residual": max((r["residual"] for r in rows), default=0.0), "rows": rows,
            "residues": {str(k): v for k, v in r_top.items()}}


def integrate_over_manifold(M: Manifold, omega: FormExpression, order: int = 64) -> float:
    """Integral of a top-degree form over the whole manifold."""
    if omega.degree != M.dim:
        raise ValueError("need a top-degree form")
    if M.is_quotient:
        nodes, weights = np.polynomial.legendre.leggauss(order)
        axes = [(0.5 * L * (nodes + 1), 0.5 * L * weights) for L in M.domain]
        frame = np.eye(M.dim)
        total = 0.0
        for combo in itertools.product(*[range(order)] * M.dim):
            x = np.array([axes[d][0][i] for d, i in enumerate(combo)])
            w = np.prod([axes[d][1][i] for d, i in enumerate(combo)])
            total += w * eval_form(omega, x, frame)
        return total
    if M.name == "S1":
        th = 2 * math.pi * np.arange(4 * order) / (4 * order)
        vals = [eval_form(omega, [math.cos(t), math.sin(t)], [[-math.sin(t), math.cos(t)]])
                for t in th]
        return 2 * math.pi * float(np.mean(vals))
    if M.name == "S2":
        nodes, weights = np.polynomial.legendre.leggauss(order)
        total = 0.0
        phis = 2 * math.pi * np.arange(2 * order) / (2 * order)
        for lo, hi in ((0.0, math.pi / 2), (math.pi / 2, math.pi)):
            for t, w in zip(0.5 * (hi - lo) * (nodes + 1) + lo, 0.5 * (hi - lo) * weights):
                st, ct = math.sin(t), math.cos(t)
                for ph in phis:
                    sp, cp = math.sin(ph), math.cos(ph)
                    x = [st * cp, st * sp, ct]
                    d_t = [ct * cp, ct * sp, -st]
                    d_p = [-st * sp, st * cp, 0.0]
                    total += w * (2 * math.pi / len(phis)) * eval_form(omega, x, [d_t, d_p])
        return total
    raise NotImplementedError(f"global quadrature on {M.name}")


def pairing(flow, alpha: FormExpression, beta: FormExpression, **kw) -> dict:
    """Residue pairing sum_p r_p(alpha) s_p(beta) against the direct integral."""
    from .connections import intersection_pairing

    M = flow.manifold
    n = M.dim
    if alpha.degree + beta.degree != n:
        raise ValueError("degrees must add up to the dimension")
    value = 0.0
    terms = {}
    for p in flow.critical.points:
        if n - p.index != alpha.degree:
            continue
        r = integrate_over_unstable(flow, p, alpha, **kw)
        s = integrate_over_stable(flow, p, beta, **kw)
        delta = intersection_pairing(flow, p, p)
        terms[str(p.id)] = {"residue": r, "coresidue": s, "intersection": delta}
        value += r * s * delta
    direct = integrate_over_manifold(M, wedge(alpha, beta))
    return {"pairing": value, "direct": direct, "difference": abs(value - direct),
            "terms": terms}


def pairing_matrix(flow, alphas: list[FormExpression], betas: list[FormExpression], **kw):
    vals = [[pairing(flow, a, b, **kw) for b in betas] for a in alphas]
    return (np.array([[v["pairing"] for v in row] for row in vals]),
            np.array([[v["direct"] for v in row] for row in vals]))


def check_integral_residues(flow, alpha: FormExpression, int_tol: float = 1e-4, **kw) -> dict:
    n = flow.manifold.dim
    table = {}
    for p in flow.critical.points:
        if n - p.index == alpha.degree:
            table[str(p.id)] = integrate_over_unstable(flow, p, alpha, **kw)
    ok = all(abs(v - round(v)) <= int_tol for v in table.values())
    return {"integral": ok, "residues": table,
            "note": "for closed alpha with integral residues T(alpha) is a spark"}
