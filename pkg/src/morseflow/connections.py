"""Connecting flow lines between critical points of adjacent index, their
orientation signs, and intersection numbers of stable/unstable manifolds.

A line from q (index k) to p (index k + 1) lies in U_q and in S_p.  The
search shoots along whichever of the two manifolds has the smaller sphere of
directions: backward from p along +-stable direction when S_p is a curve,
forward from q along +-unstable direction when U_q is a curve, and otherwise
around a circle of unstable directions of q with bisection on basin labels.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .critical import CriticalPoint, CriticalSet
from .flow import FlowError, GradientFlow, Trajectory

log = logging.getLogger(__name__)

__all__ = [
    "ConnectionSearchError",
    "AmbiguousConnection",
    "SingularSign",
    "FlowLine",
    "ConnectionData",
    "find_flow_lines",
    "find_connections",
    "sign_of",
    "intersection_pairing",
]


class ConnectionSearchError(RuntimeError):
    pass


class AmbiguousConnection(ConnectionSearchError):
    pass


class SingularSign(ConnectionSearchError):
    pass


class TransversalityViolation(ConnectionSearchError):
    pass


@dataclass
class FlowLine:
    """A flow line from ``source`` (q) up to ``target`` (p).

    ``deck`` is the word g such that the lift starting at q's representative
    ends at g . (p's representative); None on implicit backends.  ``anchor``
    is a point of the line near p, ``anchor_deck`` the deck element h with
    anchor close to h . p and ``source_deck`` the word with the line's lower
    end close to source_deck . q (both in the covering space).
    """

    source: int
    target: int
    sign: int
    representative: Trajectory
    anchor: np.ndarray
    deck: tuple[int, ...] | None = None
    anchor_deck: tuple[int, ...] | None = None
    source_deck: tuple[int, ...] | None = None
    method: str = "backward"

    def as_dict(self) -> dict:
        return {
            "from": self.source,
            "to": self.target,
            "sign": self.sign,
            "deck": None if self.deck is None else list(self.deck),
            "method": self.method,
        }


@dataclass
class ConnectionData:
    lines: dict[tuple[int, int], list[FlowLine]] = field(default_factory=dict)

    def count(self, p: int, q: int) -> int:
        """N_{p,q}: signed number of lines from q to p."""
        return sum(line.sign for line in self.lines.get((p, q), []))

    def pairs(self):
        return sorted(self.lines)

    def all_lines(self) -> list[FlowLine]:
        return [line for key in self.pairs() for line in self.lines[key]]

    def as_list(self) -> list[dict]:
        return [{"from": q, "to": p, "count": self.count(p, q),
                 "lines": [ln.as_dict() for ln in self.lines[(p, q)]]}
                for p, q in self.pairs()]


def _lift_frame(M, deck, vectors: np.ndarray) -> np.ndarray:
    if deck is None or not M.is_quotient:
        return vectors
    return vectors @ M.deck_linear(deck).T


def _displacement(M, p: CriticalPoint, y, deck=None) -> np.ndarray:
    """y - (deck . p), pulled back to p's own tangent space."""
    if not M.is_quotient:
        return np.asarray(y) - p.location
    lift = M.deck_apply(deck, p.location)
    return M.deck_linear(deck).T @ (np.asarray(y) - lift)


def _start_point(M, p: CriticalPoint, direction: np.ndarray, eps: float) -> np.ndarray:
    x = p.location + eps * direction
    return x if M.is_quotient else M.retract(x)


def _identity(M):
    return M.identity if M.is_quotient else None


def _anchor_on_path(flow, path: np.ndarray, p: CriticalPoint, eps: float):
    """First path point within eps of a lift of p, with that lift's deck."""
    M = flow.manifold
    for x in path:
        if M.is_quotient:
            lift, deck = M.nearest_lift(p.location, x)
            d = np.linalg.norm(x - lift)
        else:
            deck, d = None, np.linalg.norm(x - p.location)
        if d <= eps:
            return x, deck
    return None, None


def find_flow_lines(flow: GradientFlow, q: CriticalPoint, p: CriticalPoint,
                    eps: float | None = None, strategy: str = "auto",
                    samples: int = 64, angular_tol: float = 1e-8) -> list[FlowLine]:
    """All flow lines from q up to p (index p = index q + 1), signed."""
    if p.index != q.index + 1:
        return []
    eps = flow.critical.pairing_radius if eps is None else eps
    a = q.unstable_dim
    b = p.stable_dim
    if strategy == "auto":
        strategy = "backward" if b == 1 else ("forward" if a == 1 else "circle")
    elif strategy == "forward" and a == 2:
        strategy = "circle"
    if strategy == "backward":
        if b != 1:
            raise ValueError("backward shooting needs a one-dimensional stable manifold")
        lines = _shoot_backward(flow, q, p, eps)
    elif strategy == "forward":
        if a != 1:
            raise ValueError("forward shooting needs a one-dimensional unstable manifold")
        lines = _shoot_forward(flow, q, p, eps)
    elif strategy == "circle":
        if a != 2:
            raise ValueError("circle search needs a two-dimensional unstable manifold")
        lines = _circle_search(flow, q, p, eps, samples, angular_tol)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    for line in lines:
        line.sign = sign_of(flow, line, eps)
    return lines


def _shoot_backward(flow, q, p, eps) -> list[FlowLine]:
    M = flow.manifold
    lines = []
    s0 = p.stable_frame.vectors[0]
    for sgn in (1.0, -1.0):
        y = _start_point(M, p, sgn * s0, eps)
        traj = flow.integrate(y, -1)
        if not traj.converged:
            log.warning("backward shot from %d did not converge (%s)", p.id, traj.status)
            continue
        if traj.limit != q.id:
            continue
        h = traj.deck
        deck = M.deck_inverse(h) if M.is_quotient else None
        path = Trajectory(traj.times[-1] - traj.times[::-1], traj.points[::-1], "converged",
                          1, p.id, None)
        lines.append(FlowLine(q.id, p.id, 0, path, y, deck, _identity(M), h, "backward"))
    return lines


def _shoot_forward(flow, q, p, eps) -> list[FlowLine]:
    M = flow.manifold
    lines = []
    u0 = q.unstable_frame.vectors[0]
    for sgn in (1.0, -1.0):
        x = _start_point(M, q, sgn * u0, eps)
        traj = flow.integrate(x, 1)
        if not traj.converged:
            log.warning("forward shot from %d did not converge (%s)", q.id, traj.status)
            continue
        if traj.limit != p.id:
            continue
        anchor, h = _anchor_on_path(flow, traj.points, p, eps)
        if anchor is None:
            anchor, h = traj.end, traj.deck
        lines.append(FlowLine(q.id, p.id, 0, traj, anchor, h, h, _identity(M), "forward"))
    return lines


def _circle_search(flow, q, p, eps, samples, angular_tol) -> list[FlowLine]:
    """Basin boundaries on the circle of unstable directions of q.

    A boundary direction is first bracketed to ``angular_tol``.  The
    separatrix it launches is transversally unstable, so the bracket is then
    followed by edge tracking: both sides are advanced together and
    re-bisected whenever they drift apart, until the pair reaches p.
    """
    M = flow.manifold
    u0, u1 = q.unstable_frame.vectors[:2]

    def start(theta):
        d = math.cos(theta) * u0 + math.sin(theta) * u1
        return _start_point(M, q, d, eps)

    # offset keeps the samples off symmetry axes, where separatrices tend to sit
    thetas = 2 * math.pi * (np.arange(samples) + 0.3819660112501051) / samples
    labels = [_label(flow, start(t)) for t in thetas]
    brackets = []
    for i in range(samples):
        lo, hi = thetas[i], thetas[i] + 2 * math.pi / samples
        la, lb = labels[i], labels[(i + 1) % samples]
        if la == lb:
            continue
        while hi - lo > angular_tol:
            mid = 0.5 * (lo + hi)
            lm = _label(flow, start(mid))
            if lm == la:
                lo = mid
            else:
                hi, lb = mid, lm
        brackets.append((lo, hi, la, lb))
    for (a, _, _, _), (b, _, _, _) in zip(brackets, brackets[1:]):
        if b - a < 2 * angular_tol:
            raise AmbiguousConnection(f"two boundary directions within {angular_tol:g} rad")

    lines = []
    for lo, hi, la, lb in brackets:
        found = _track_edge(flow, start(lo), start(hi), la, lb, q.index + 1, eps)
        if found is None:
            log.warning("edge tracking from %d at angle %.9f did not reach a critical point",
                        q.id, lo)
            continue
        target, anchor, h, rep = found
        if target.id != p.id:
            continue
        lines.append(FlowLine(q.id, p.id, 0, rep, anchor, h, h, _identity(M), "circle"))
    return lines


def _label(flow, x):
    traj = flow.integrate(x, 1, keep_path=False)
    return (traj.limit, traj.deck) if traj.converged else ("nc",)


def _midpoint(M, a, b):
    m = 0.5 * (a + b)
    return m if M.is_quotient else M.retract(m)


def _track_edge(flow, a, b, la, lb, index, eps, gap=1e-10, spread=1e-5,
                max_rounds=2000):
    """Follow the boundary between basins ``la`` and ``lb`` to a critical
    point of the given index.  Returns (point, anchor, deck, trajectory)."""
    M = flow.manifold
    candidates = [c for c in flow.critical.points if c.index == index]

    def near(x):
        for c in candidates:
            if M.is_quotient:
                lift, deck = M.nearest_lift(c.location, x)
                if np.linalg.norm(x - lift) < eps:
                    return c, deck
            elif np.linalg.norm(x - c.location) < eps:
                return c, None
        return None

    times, points = [0.0], [_midpoint(M, a, b)]
    tau = 0.05
    for _ in range(max_rounds):
        while np.linalg.norm(a - b) > gap:
            m = _midpoint(M, a, b)
            lm = _label(flow, m)
            if lm == la:
                a = m
            else:
                b, lb = m, lm
        x = _midpoint(M, a, b)
        hit = near(x)
        if hit is not None:
            c, deck = hit
            rep = Trajectory(np.array(times), np.array(points), "stopped", 1, c.id, deck)
            return c, x, deck, rep
        ta = flow.integrate(a, 1, t_end=tau, keep_path=False,
                            stop=lambda t, y: near(y) is not None)
        tb = flow.integrate(b, 1, t_end=ta.times[-1], keep_path=False)
        if np.linalg.norm(ta.end - tb.end) > spread and tau > 1e-6:
            tau *= 0.5
            continue
        a, b = ta.end, tb.end
        times.append(times[-1] + ta.times[-1])
        points.append(_midpoint(M, a, b))
        if np.linalg.norm(a - b) < 0.1 * spread:
            tau *= 2.0
    return None


def sign_of(flow: GradientFlow, line: FlowLine, eps: float | None = None) -> int:
    """Orientation sign of a flow line.

    Near p the line meets the small sphere in S_p at ``anchor``.  The tangent
    frame of that sphere, oriented so that (outward radial, frame) is the
    orientation of S_p, is carried backward along the line to q and compared
    with the orientation of S_q.
    """
    M = flow.manifold
    cs = flow.critical
    p = cs[line.target]
    q = cs[line.source]
    d = _displacement(M, p, line.anchor, line.anchor_deck)
    s = p.stable_frame.vectors @ d
    norm = np.linalg.norm(s)
    if norm == 0.0:
        raise SingularSign("anchor has no stable component")
    r = s / norm
    if q.index == 0:
        return 1 if r[0] > 0 else -1
    # complete r to a basis of the stable space; sigma fixes its orientation
    qm, _ = np.linalg.qr(np.column_stack([r, np.eye(len(r))]))
    w = qm[:, 1:len(r)].T
    sigma = 1 if np.linalg.det(np.vstack([r, w])) > 0 else -1
    frame = _lift_frame(M, line.anchor_deck, w @ p.stable_frame.vectors)
    radius = flow.critical.pairing_radius if eps is None else eps
    traj = flow.integrate(line.anchor, -1, frame=frame, capture_radius=radius)
    if not traj.converged or traj.limit != q.id:
        raise FlowError(f"sign transport from {line.anchor.tolist()} missed the source")
    W = traj.frame
    W = W / np.linalg.norm(W, axis=1, keepdims=True)
    coords = _lift_frame(M, traj.deck, q.stable_frame.vectors) @ W.T
    det = float(np.linalg.det(coords))
    if abs(det) < 1e-8:
        raise SingularSign(f"projection determinant {det:.2e} for line {q.id}->{p.id}")
    return sigma * (1 if det > 0 else -1)


def find_connections(flow: GradientFlow, critical: CriticalSet | None = None,
                     eps: float | None = None, strategy: str = "auto") -> ConnectionData:
    cs = critical or flow.critical
    data = ConnectionData()
    for p in cs.points:
        for q in cs.points:
            if p.index == q.index + 1:
                lines = find_flow_lines(flow, q, p, eps=eps, strategy=strategy)
                if lines:
                    data.lines[(p.id, q.id)] = lines
    for line in data.all_lines():
        if not cs[line.source].index < cs[line.target].index:
            raise TransversalityViolation("flow line does not increase the index")
    return data


def intersection_pairing(flow: GradientFlow, p: CriticalPoint, p_prime: CriticalPoint,
                         shots: int = 16, eps: float | None = None) -> int:
    """Signed count of S_p meeting U_{p'} for critical points of equal index.

    Equal-index stable and unstable manifolds meet only at p = p'.  The
    off-diagonal case is verified by shooting U_{p'} forward and checking
    that no shot lands on p.
    """
    if p.index != p_prime.index:
        raise ValueError("intersection pairing needs complementary dimensions")
    M = flow.manifold
    if p.id == p_prime.id:
        if not M.orientable:
            return 1
        return M.orientation_sign(p.location, np.vstack([p.unstable_frame.vectors,
                                                         p.stable_frame.vectors]))
    eps = flow.critical.pairing_radius if eps is None else eps
    U = p_prime.unstable_frame.vectors
    if len(U) == 0:
        return 0
    rng = np.random.default_rng(p.id * 7919 + p_prime.id)
    for _ in range(shots):
        d = rng.standard_normal(len(U)) @ U
        traj = flow.integrate(_start_point(M, p_prime, d / np.linalg.norm(d), eps), 1)
        if traj.converged and traj.limit == p.id:
            raise TransversalityViolation(
                f"unstable manifold of {p_prime.id} meets stable manifold of {p.id}")
    return 0
