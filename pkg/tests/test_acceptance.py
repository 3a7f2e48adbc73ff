"""One test per acceptance criterion; each records a PASS/FAIL line."""
import math
import time

import numpy as np

from morseflow import currents
from morseflow.connections import find_connections
from morseflow.critical import find_critical_points
from morseflow.currents import (P_apply, admissible_samples, integrate_over_unstable,
                                pairing_matrix, residues, verify_fme, verify_P_chain_map)
from morseflow.expr import FormExpression, parse
from morseflow.flow import GradientFlow, Sphere17Flow
from morseflow.geometry import sphere
from morseflow.morse_complex import (LocalSystem, Twisted, build_complex, homology,
                                     morse_inequalities, poincare_dual)
from morseflow.snf import determinant, smith_normal_form

from test_complex import _oracle
from test_snf import check_snf


def _pipeline(M, text):
    f = parse(text, M.ambient_dim)
    cs = find_critical_points(M, f)
    flow = GradientFlow(M, f, cs)
    conn = find_connections(flow, cs, eps=5e-4)
    return cs, flow, conn, build_complex(cs, conn)


def test_criterion_01_sphere_height(criterion):
    t0 = time.perf_counter()
    cs, _, _, C = _pipeline(sphere(2), "z")
    H = homology(C)
    ineq = morse_inequalities(cs, H)
    elapsed = time.perf_counter() - t0
    equalities = all(r["slack"] == 0 for r in ineq["strong"])
    ok = (len(cs) == 2 and sorted(p.index for p in cs) == [0, 2] and H.betti == [1, 0, 1]
          and H.torsion == [[], [], []] and equalities and elapsed < 10)
    criterion(1, ok, f"indices {sorted(p.index for p in cs)}, H={H.betti}, "
                     f"Morse equalities {equalities}, {elapsed:.1f} s")


def test_criterion_02_perturbed_sphere(criterion):
    t0 = time.perf_counter()
    cs, _, conn, C = _pipeline(sphere(2), "z^2 + 0.5*x")
    H = homology(C)
    elapsed = time.perf_counter() - t0
    saddle = cs.by_index(1)[0]
    counts = [conn.count(m.id, saddle.id) for m in cs.by_index(2)]
    d2 = not C.matrix(1).dot(C.matrix(2)).any()
    nondeg = min(abs(ev) for p in cs for ev in p.eigenvalues)
    ok = (cs.counts() == [1, 1, 2] and nondeg > 1e-3 and d2 and sorted(counts) == [-1, 1]
          and H.betti == [1, 0, 1] and elapsed < 60)
    criterion(2, ok, f"counts {cs.counts()}, min |eig| {nondeg:.3f}, d^2=0 {d2}, "
                     f"N(max,s)={counts}, H={H.betti}, {elapsed:.1f} s")


def test_criterion_03_flat_torus(t2, criterion):
    conn = t2.connections
    H = homology(t2.complex())
    counts = {k: conn.count(*k) for k in conn.pairs()}
    paired = all(len(conn.lines[k]) == 2 for k in conn.pairs())
    ok = (len(t2.critical) == 4 and len(counts) == 4 and all(v == 0 for v in counts.values())
          and paired and H.betti == [1, 2, 1] and H.torsion == [[], [], []])
    criterion(3, ok, f"{len(t2.critical)} points, N={sorted(counts.values())} from "
                     f"{sum(len(v) for v in conn.lines.values())} lines, H={H.betti}")


def test_criterion_04_circle(s1, criterion):
    lines = s1.connections.all_lines()
    H = homology(s1.complex())
    signs = sorted(l.sign for l in lines)
    ok = len(lines) == 2 and signs == [-1, 1] and H.betti == [1, 1]
    criterion(4, ok, f"line signs {signs}, H={H.betti}")


def test_criterion_05_residues(s2_height, area_form, criterion):
    r = residues(s2_height.flow, area_form).residues[0]
    rng = np.random.default_rng(11)
    empty = True
    for _ in range(5):
        c = rng.normal(size=3)
        a = s2_height.form(1, {"x": f"{c[0]:.6f}*y", "y": f"{c[1]:.6f}*z", "z": f"{c[2]:.6f}"})
        empty &= len(P_apply(s2_height.flow, a)) == 0
    p = s2_height.critical[0]
    swept = currents._surface_integral(s2_height.flow, p, area_form, p.unstable_frame.vectors,
                                       1, 1e-3, 1e-9, 1e-8)
    ok = abs(r - 1) < 1e-4 and abs(swept - 1) < 1e-4 and empty
    criterion(5, ok, f"r_min(area/4pi) = {r:.10f} (flow-swept {swept:.10f}), "
                     f"P(1-form) empty {empty}")


def _fme(flow, form, n=20):
    pts = admissible_samples(flow, n)
    return verify_fme(flow, form, pts)["max_residual"], len(pts)


def test_criterion_06_fme(s1, s2_height, criterion):
    w1 = s1.form(1, {"x": "-(2 + y)*y", "y": "(2 + x*y)*x"})
    r1, n1 = _fme(s1.flow, w1)
    w2 = s2_height.form(1, {"x": "y*z", "y": "x + z^2", "z": "sin(x)"})
    r2, n2 = _fme(s2_height.flow, w2)
    M = sphere(2)
    F = Sphere17Flow(M, [1.0, 0.0])
    w3 = FormExpression.from_terms(1, 3, {"x": "y", "y": "x*z", "z": "sin(x)"})
    r3, n3 = _fme(F, w3)
    ok = max(r1, r2, r3) < 1e-3 and min(n1, n2, n3) >= 20
    criterion(6, ok, f"max residual S1 {r1:.2e} ({n1}), S2 {r2:.2e} ({n2}), "
                     f"translation flow {r3:.2e} ({n3})")


def test_criterion_07_chain_map(t2, criterion):
    beta = t2.form(1, {"x": "sin(2*pi*y)", "y": "cos(2*pi*x)*sin(2*pi*y)"})
    rep = verify_P_chain_map(t2.flow, t2.critical, t2.complex(), beta)
    ok = bool(rep["rows"]) and rep["max_residual"] < 1e-4
    sides = "; ".join(f"q={r['q']}: {r['lhs']:.2e} vs {r['rhs']:.2e}" for r in rep["rows"])
    criterion(7, ok, f"max |sum r_p n_pq - r_q(d beta)| = {rep['max_residual']:.2e} ({sides})")


def test_criterion_08_duality(s2_height, t2, criterion):
    verdicts = {name: poincare_dual(S.complex(), S.dual())
                for name, S in (("S2", s2_height), ("T2", t2))}
    ok = all(v["ok"] and v["transpose_match"] for v in verdicts.values())
    detail = ", ".join(f"{k}: H^(n-k) match {all(d['ok'] for d in v['degrees'])}, "
                       f"transpose {v['transpose_match']}" for k, v in verdicts.items())
    criterion(8, ok, detail)


def test_criterion_09_pairing(t2, criterion):
    forms = [t2.form(1, {"x": "1"}), t2.form(1, {"y": "1"})]
    Pm, direct = pairing_matrix(t2.flow, forms, forms)
    antisym = np.allclose(Pm, -Pm.T, atol=1e-8)
    det = float(np.linalg.det(Pm))
    diff = float(np.max(np.abs(Pm - direct)))
    ok = antisym and abs(abs(det) - 1) < 1e-8 and diff < 1e-5
    criterion(9, ok, f"matrix {np.round(Pm, 8).tolist()}, det {det:.8f}, "
                     f"max |residue - direct| {diff:.1e}")


def test_criterion_10_klein_and_twisted(klein_setup, t2, criterion):
    Hk = homology(klein_setup.complex())
    system = LocalSystem((np.array([[-1]]), np.array([[1]])))
    Ht = homology(t2.complex(Twisted(system)))
    betti, torsion = _oracle([[-2, 0]], [[0], [-2]])
    ok = Hk.betti == [1, 2, 1] and Ht.betti == betti and Ht.torsion == torsion
    criterion(10, ok, f"Klein Z/2 dims {Hk.betti}; twisted T2 betti {Ht.betti} "
                      f"torsion {Ht.torsion} vs CW {betti} {torsion}")


def test_criterion_11_snf(criterion):
    rng = np.random.default_rng(20241017)
    failures = 0
    for _ in range(1000):
        m, n = rng.integers(1, 9, size=2)
        A = (rng.integers(-12, 13, size=(m, n)) * (rng.random((m, n)) < rng.uniform(0.2, 1)))
        try:
            check_snf(A.tolist())
        except AssertionError:
            failures += 1
    criterion(11, failures == 0, f"1000 matrices up to 8x8, {failures} failures")


_PIECES = ["x", "y", "z", "x^2", "y*z", "z^3", "sin(2*pi*x)", "cos(2*pi*y)",
           "exp(0.3*x*y)", "sqrt(2 + x^2)", "log(3 + y)", "cos(4*pi*x)", "x*y*z"]


def _random_expression(rng):
    terms = []
    for _ in range(rng.integers(2, 5)):
        a, b = rng.choice(_PIECES, size=2)
        c = rng.uniform(-2, 2)
        op = rng.choice(["*", "+", "comp"])
        if op == "comp":
            terms.append(f"{c:.4f}*sin({a} - {b})")
        else:
            terms.append(f"{c:.4f}*({a}){op}({b})")
    return " + ".join(terms)


def _fd(f, x, h=1e-3):
    """Central differences at steps h and h/2, Richardson-combined to fourth order."""
    n = len(x)
    E = np.eye(n)

    def grad(k):
        return np.array([(f(x + k * E[i]) - f(x - k * E[i])) / (2 * k) for i in range(n)])

    def hess(k):
        return np.array([[(f(x + k * E[i] + k * E[j]) - f(x + k * E[i] - k * E[j])
                           - f(x - k * E[i] + k * E[j]) + f(x - k * E[i] - k * E[j]))
                          / (4 * k * k) for j in range(n)] for i in range(n)])

    return ((4 * grad(h / 2) - grad(h)) / 3, (4 * hess(h / 2) - hess(h)) / 3)


def test_criterion_12_ad(criterion):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        e = parse(_random_expression(rng), 3)
        x = rng.uniform(-1, 1, size=3)
        jv = e.jet(x)
        g, H = _fd(lambda p: e(p), x)
        rel_g = np.max(np.abs(jv.gradient - g)) / max(1.0, np.max(np.abs(jv.gradient)))
        rel_h = np.max(np.abs(jv.hessian - H)) / max(1.0, np.max(np.abs(jv.hessian)))
        worst = max(worst, rel_g, rel_h)
    criterion(12, worst < 1e-5, f"100 expressions, worst relative deviation {worst:.2e}")
