"""Command-line front end: config -> pipeline stages -> JSON report and CSVs.

Exit codes: 0 success, 1 usage or config error, 2 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, section_hash
from .connections import ConnectionData, ConnectionSearchError, FlowLine, find_connections
from .critical import (DegenerateCriticalPointError, IncompleteCriticalSetError, SeedSpec,
                       critical_set_from_points, find_critical_points, negated)
from .currents import (QuadratureError, admissible_samples, check_integral_residues,
                       P_apply, pairing, residues, verify_P_chain_map, verify_fme)
from .expr import ExpressionError, FormExpression, parse
from .flow import FlowError, FlowSettings, GradientFlow, Sphere17Flow, Trajectory
from .geometry import GeometryError, make_manifold
from .morse_complex import (ComplexError, Integers, LocalSystem, ModP, Rationals, Twisted,
                            build_complex, homology, morse_inequalities, poincare_dual)

log = logging.getLogger("morseflow")

SCHEMA = "morseflow.report/1"
STAGES = ("critical-points", "connections", "complex", "homology", "residues", "verify-fme",
          "pairing")
COMMANDS = STAGES + ("report", "all")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer, bool)):
        return obj if isinstance(obj, bool) else int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


# --------------------------------------------------------------------------
# live objects rebuilt from the config


@dataclass
class Context:
    cfg: RunConfig
    out: Path
    use_cache: bool = True
    threads: int = 1
    results: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    _live: dict = field(default_factory=dict)

    @property
    def manifold(self):
        if "M" not in self._live:
            m = self.cfg.manifold
            self._live["M"] = make_manifold(m.kind, m.dim)
        return self._live["M"]

    @property
    def function(self):
        if "f" not in self._live:
            self._live["f"] = parse(self.cfg.function.expression, self.manifold.ambient_dim)
        return self._live["f"]

    @property
    def gradient(self) -> bool:
        return self.cfg.flow.kind == "gradient"

    def settings(self) -> FlowSettings:
        c = self.cfg.flow
        return FlowSettings(rtol=c.rtol, atol=c.atol, max_time=c.max_time,
                            capture_radius=c.capture_radius)

    def form(self, name: str) -> FormExpression:
        fc = self.cfg.form(name)
        return FormExpression.from_terms(fc.degree, self.manifold.ambient_dim, dict(fc.terms))

    def mapper(self):
        if self.threads <= 1:
            return map
        pool = self._live.setdefault("pool", ThreadPoolExecutor(self.threads))
        return pool.map

    # cache ----------------------------------------------------------------

    def key(self, *sections: str) -> str:
        return section_hash({s: self.cfg.section(s) for s in sections}, __version__)

    def _cache_path(self, stage: str, key: str) -> Path:
        return self.out / ".cache" / f"{stage}-{key}.json"

    def cached(self, stage: str, key: str, compute):
        path = self._cache_path(stage, key)
        if self.use_cache and path.is_file():
            log.info("%s: cache hit %s", stage, key)
            return json.loads(path.read_text())
        value = json.loads(_dumps(compute()))
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(_dumps(value))
        return value

    def lookup(self, stage: str, key: str):
        path = self._cache_path(stage, key)
        return json.loads(path.read_text()) if path.is_file() else None


# --------------------------------------------------------------------------
# stages


CRIT_KEYS = ("manifold", "function", "critical")
CONN_KEYS = CRIT_KEYS + ("flow", "connections")


def _critical_payload(ctx: Context, f=None) -> dict:
    c = ctx.cfg.critical
    seeds = SeedSpec(seed=c.seed, count=c.count, grid=c.grid)
    cs = find_critical_points(ctx.manifold, f or ctx.function, seeds, grad_tol=c.grad_tol,
                              nondegen_tol=c.nondegen_tol, merge_tol=c.merge_tol,
                              pairing_radius=c.pairing_radius)
    return {"pairing_radius": cs.pairing_radius, "points": [p.as_dict() for p in cs.points],
            "counts": cs.counts()}


def critical_set(ctx: Context):
    if "critical" in ctx._live:
        return ctx._live["critical"]
    data = ctx.cached("critical-points", ctx.key(*CRIT_KEYS), lambda: _critical_payload(ctx))
    ctx.results["critical_points"] = data
    cs = critical_set_from_points(ctx.manifold, ctx.function,
                                  [p["location"] for p in data["points"]],
                                  data["pairing_radius"])
    ctx._live["critical"] = cs
    return cs


def _flow(ctx: Context, cs=None, f=None):
    return GradientFlow(ctx.manifold, f or ctx.function, cs, ctx.settings())


def gradient_flow(ctx: Context):
    if "flow" not in ctx._live:
        ctx._live["flow"] = _flow(ctx, critical_set(ctx))
    return ctx._live["flow"]


def _line_payload(line: FlowLine) -> dict:
    tr = line.representative
    return {
        **line.as_dict(),
        "anchor": line.anchor,
        "anchor_deck": line.anchor_deck,
        "source_deck": line.source_deck,
        "path": {"times": tr.times, "points": tr.points, "status": tr.status,
                 "direction": tr.direction, "limit": tr.limit, "deck": tr.deck},
    }


def _opt_tuple(v):
    return None if v is None else tuple(v)


def _line_from_payload(d: dict) -> FlowLine:
    p = d["path"]
    tr = Trajectory(np.array(p["times"]), np.array(p["points"]), p["status"], p["direction"],
                    p["limit"], _opt_tuple(p["deck"]))
    return FlowLine(d["from"], d["to"], d["sign"], tr, np.array(d["anchor"]),
                    _opt_tuple(d["deck"]), _opt_tuple(d["anchor_deck"]),
                    _opt_tuple(d["source_deck"]), d["method"])


def _connection_payload(flow, cs, ctx) -> dict:
    c = ctx.cfg.connections
    data = find_connections(flow, cs, eps=c.eps, strategy=c.strategy)
    return {"lines": [_line_payload(l) for l in data.all_lines()]}


def _connections_from_payload(payload: dict) -> ConnectionData:
    data = ConnectionData()
    for d in payload["lines"]:
        line = _line_from_payload(d)
        data.lines.setdefault((line.target, line.source), []).append(line)
    return data


def connections(ctx: Context) -> ConnectionData:
    if "connections" in ctx._live:
        return ctx._live["connections"]
    flow, cs = gradient_flow(ctx), critical_set(ctx)
    payload = ctx.cached("connections", ctx.key(*CONN_KEYS),
                         lambda: _connection_payload(flow, cs, ctx))
    data = _connections_from_payload(payload)
    ctx.results["connections"] = [
        {k: v for k, v in d.items() if k in ("from", "to", "sign", "deck", "method")}
        for d in payload["lines"]]
    ctx._live["connections"] = data
    return data


def _modes(ctx: Context):
    out = []
    for label in ctx.cfg.complex.modes:
        if label == "Z":
            out.append((label, Integers()))
        elif label == "Q":
            out.append((label, Rationals()))
        elif label.startswith("Z/"):
            out.append((label, ModP(int(label[2:]))))
        elif label == "twisted":
            mats = tuple(np.array(m, dtype=int) for m in ctx.cfg.complex.local_system)
            if not mats:
                raise ConfigError("twisted mode needs complex.local_system")
            out.append((label, Twisted(LocalSystem(mats))))
        else:
            raise ConfigError(f"unknown coefficient mode {label!r}")
    return out


def complexes(ctx: Context) -> dict:
    if "complexes" in ctx._live:
        return ctx._live["complexes"]
    cs, data = critical_set(ctx), connections(ctx)
    built = {}
    table = {}
    for label, mode in _modes(ctx):
        try:
            C = build_complex(cs, data, mode)
        except ComplexError as exc:
            if "d^2" in str(exc):
                ctx.failures.append(f"complex[{label}]: {exc}")
                table[label] = {"error": str(exc)}
                continue
            raise
        built[label] = C
        table[label] = {**C.as_dict(), "d_squared_zero": True}
    ctx.results["complex"] = table
    ctx._live["complexes"] = built
    return built


def _dual_complex(ctx: Context, label: str, mode):
    """Complex of -f on the same critical points."""
    cs = critical_set(ctx)
    neg = negated(cs)
    g = neg.function
    def compute():
        flow = _flow(ctx, neg, g)
        return _connection_payload(flow, neg, ctx)
    payload = ctx.cached("dual-connections", ctx.key(*CONN_KEYS), compute)
    return build_complex(neg, _connections_from_payload(payload), mode)


def stage_homology(ctx: Context) -> None:
    built = complexes(ctx)
    cs = critical_set(ctx)
    hom, ineq, dual = {}, {}, {}
    for label, C in built.items():
        H = homology(C)
        hom[label] = H.as_dict()
        if not isinstance(C.mode, Twisted):
            ineq[label] = morse_inequalities(cs, H)
            if not ineq[label]["ok"]:
                ctx.failures.append(f"Morse inequalities fail for {label}")
        if ctx.cfg.complex.duality and not isinstance(C.mode, Twisted):
            verdict = poincare_dual(C, _dual_complex(ctx, label, C.mode))
            dual[label] = verdict
            if not verdict["ok"]:
                ctx.failures.append(f"duality mismatch for {label}")
    ctx.results["homology"] = hom
    ctx.results["morse_inequalities"] = ineq
    if dual:
        ctx.results["duality"] = dual
    exp = ctx.cfg.expect
    for label, want in (("Z", exp.betti), ("Z/2", exp.betti_mod2)):
        if want is not None and label in hom and tuple(hom[label]["betti"]) != tuple(want):
            ctx.failures.append(f"betti numbers {hom[label]['betti']} for {label}, "
                                f"expected {list(want)}")


def stage_critical(ctx: Context) -> None:
    cs = critical_set(ctx)
    want = ctx.cfg.expect.counts
    if want is not None and tuple(cs.counts()) != tuple(want):
        ctx.failures.append(f"critical counts {cs.counts()}, expected {list(want)}")


def stage_residues(ctx: Context) -> None:
    flow = gradient_flow(ctx)
    cur = ctx.cfg.currents
    kw = {"eps0": cur.eps0}
    key = ctx.key(*CONN_KEYS, "currents", "forms", "checks")

    def compute():
        out = {}
        for name in ctx.cfg.checks.residues:
            alpha = ctx.form(name)
            rv = residues(flow, alpha, **kw)
            integral = check_integral_residues(flow, alpha, int_tol=cur.int_tol, **kw)
            out[name] = {**rv.as_dict(), "P": P_apply(flow, alpha, **kw).as_list(),
                         "integral": integral["integral"], "note": integral["note"]}
        return out

    ctx.results["residues"] = ctx.cached("residues", key, compute)
    if ctx.cfg.checks.chain_map:
        C = complexes(ctx).get("Z")
        cs = critical_set(ctx)

        def chain():
            if C is None:
                raise ConfigError("the chain-map check needs the Z coefficient mode")
            return {name: verify_P_chain_map(flow, cs, C, ctx.form(name), **kw)
                    for name in ctx.cfg.checks.chain_map}

        table = ctx.cached("chain-map", key, chain)
        ctx.results["chain_map"] = table
        for name, row in table.items():
            if row["max_residual"] > cur.chain_tol:
                ctx.failures.append(f"chain map residual {row['max_residual']:.3g} for {name}")


def _fme_flow(ctx: Context):
    if ctx.gradient:
        return gradient_flow(ctx)
    if ctx.cfg.flow.kind == "sphere17":
        return Sphere17Flow(ctx.manifold, list(ctx.cfg.flow.direction))
    raise ConfigError(f"unknown flow kind {ctx.cfg.flow.kind!r}")


def stage_fme(ctx: Context) -> None:
    cur = ctx.cfg.currents
    flow = _fme_flow(ctx)
    keys = (("flow", "manifold", "currents", "forms", "checks")
            + (CONN_KEYS if ctx.gradient else ()))

    def compute():
        pts = admissible_samples(flow, cur.samples, margin=cur.margin, seed=cur.sample_seed)
        out = {}
        for name in ctx.cfg.checks.fme:
            out[name] = verify_fme(flow, ctx.form(name), pts, h=cur.fd_step,
                                   mapper=ctx.mapper())
        return {"samples": pts, "forms": out}

    data = ctx.cached("verify-fme", ctx.key(*keys), compute)
    ctx.results["fme"] = {name: {"max_residual": v["max_residual"],
                                 "residuals": [r["residual"] for r in v["samples"]]}
                          for name, v in data["forms"].items()}
    ctx._live["fme_samples"] = np.array(data["samples"])
    for name, v in data["forms"].items():
        if v["max_residual"] > cur.fme_tol:
            ctx.failures.append(f"FME residual {v['max_residual']:.3g} for {name}")


def stage_pairing(ctx: Context) -> None:
    spec = ctx.cfg.checks.pairing
    if not spec.alphas:
        return
    flow = gradient_flow(ctx)
    cur = ctx.cfg.currents

    def compute():
        return {f"{a}|{b}": pairing(flow, ctx.form(a), ctx.form(b), eps0=cur.eps0)
                for a in spec.alphas for b in spec.betas}

    table = ctx.cached("pairing", ctx.key(*CONN_KEYS, "currents", "forms", "checks"), compute)
    matrix = [[table[f"{a}|{b}"]["pairing"] for b in spec.betas] for a in spec.alphas]
    direct = [[table[f"{a}|{b}"]["direct"] for b in spec.betas] for a in spec.alphas]
    ctx.results["pairing"] = {"alphas": list(spec.alphas), "betas": list(spec.betas),
                              "matrix": matrix, "direct": direct, "entries": table}
    worst = max(v["difference"] for v in table.values())
    if worst > cur.pairing_tol:
        ctx.failures.append(f"pairing differs from the direct integral by {worst:.3g}")


def _needs_gradient(stage: str) -> bool:
    return stage != "verify-fme"


RUNNERS = {
    "critical-points": stage_critical,
    "connections": lambda ctx: connections(ctx),
    "complex": lambda ctx: complexes(ctx),
    "homology": stage_homology,
    "residues": stage_residues,
    "verify-fme": stage_fme,
    "pairing": stage_pairing,
}


def _applicable(ctx: Context, stage: str) -> bool:
    checks = ctx.cfg.checks
    if not ctx.gradient and _needs_gradient(stage):
        return False
    if stage == "residues":
        return bool(checks.residues or checks.chain_map)
    if stage == "verify-fme":
        return bool(checks.fme)
    if stage == "pairing":
        return bool(checks.pairing.alphas)
    return True


# --------------------------------------------------------------------------
# output


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


def write_csvs(ctx: Context) -> None:
    n = ctx.manifold.ambient_dim
    xs = [f"x{i + 1}" for i in range(n)]
    crit = ctx.results.get("critical_points")
    if crit:
        _write_csv(ctx.out / "critical_points.csv", ["id", "index", "value", *xs],
                   ([p["id"], p["index"], p["value"], *p["location"]] for p in crit["points"]))
    data = ctx._live.get("connections")
    if data is not None:
        rows = []
        for line in data.all_lines():
            tr = line.representative
            for t, x in zip(tr.times, tr.points):
                rows.append([line.source, line.target, line.sign, t, *x])
        _write_csv(ctx.out / "flow_lines.csv", ["from", "to", "sign", "t", *xs], rows)
    res = ctx.results.get("residues")
    if res:
        rows = []
        for name, rv in res.items():
            for kind in ("residues", "coresidues"):
                for pid, v in rv[kind].items():
                    rows.append([name, pid, kind[:-1], v])
        _write_csv(ctx.out / "residues.csv", ["form", "critical", "kind", "value"], rows)
    pts = ctx._live.get("fme_samples")
    if pts is not None and len(pts):
        flow = _fme_flow(ctx)
        for i, x in enumerate(pts):
            tr = flow.integrate(x, 1)
            _write_csv(ctx.out / "trajectories" / f"sample_{i:03d}.csv", ["t", *xs],
                       ([t, *p] for t, p in zip(tr.times, tr.points)))


def build_report(ctx: Context) -> dict:
    return {
        "schema": SCHEMA,
        "version": __version__,
        "config": {"name": ctx.cfg.name, **{s: ctx.cfg.section(s) for s in
                   ("manifold", "function", "flow", "critical", "connections", "complex",
                    "currents", "forms", "checks", "expect")}},
        "results": ctx.results,
        "failures": sorted(ctx.failures),
        "status": "fail" if ctx.failures else "ok",
    }


def _collect_cached(ctx: Context) -> None:
    """Fill results from cached stage outputs without computing anything."""
    if not ctx.gradient:
        data = ctx.lookup("verify-fme", ctx.key("flow", "manifold", "currents", "forms",
                                                 "checks"))
        if data:
            stage_fme(ctx)
        return
    if ctx.lookup("critical-points", ctx.key(*CRIT_KEYS)) is None:
        return
    stage_critical(ctx)
    if ctx.lookup("connections", ctx.key(*CONN_KEYS)) is None:
        return
    if ctx.lookup("dual-connections", ctx.key(*CONN_KEYS)) or not ctx.cfg.complex.duality:
        stage_homology(ctx)
    else:
        complexes(ctx)
    k = ctx.key(*CONN_KEYS, "currents", "forms", "checks")
    if ctx.lookup("residues", k) and (not ctx.cfg.checks.chain_map
                                      or ctx.lookup("chain-map", k)):
        stage_residues(ctx)
    if ctx.lookup("verify-fme", ctx.key("flow", "manifold", "currents", "forms", "checks",
                                        *CONN_KEYS)):
        stage_fme(ctx)
    if ctx.lookup("pairing", k):
        stage_pairing(ctx)


def run(command: str, config: str, out: str | Path = "out", threads: int = 1,
        use_cache: bool = True) -> tuple[int, Context]:
    cfg = load_config(config)
    ctx = Context(cfg, Path(out) / cfg.name, use_cache=use_cache, threads=max(1, threads))
    ctx.out.mkdir(parents=True, exist_ok=True)
    if command == "report":
        _collect_cached(ctx)
        stages = []
    elif command == "all":
        stages = [s for s in STAGES if _applicable(ctx, s)]
    else:
        if not ctx.gradient and _needs_gradient(command):
            raise ConfigError(f"{command} needs a gradient flow; this config has "
                              f"flow.kind = {cfg.flow.kind!r}")
        stages = [command]
    for stage in stages:
        t0 = time.perf_counter()
        RUNNERS[stage](ctx)
        ctx.timings[stage] = time.perf_counter() - t0
        log.info("%s done in %.2f s", stage, ctx.timings[stage])
    if "pool" in ctx._live:
        ctx._live["pool"].shutdown()
    report = build_report(ctx)
    (ctx.out / "report.json").write_text(_dumps(report))
    (ctx.out / "timings.json").write_text(_dumps(ctx.timings))
    write_csvs(ctx)
    return (2 if ctx.failures else 0), ctx


def main(argv=None) -> int:
    parser = _Parser(prog="morseflow", description="Morse homology and flow currents")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True,
                        help="TOML config path or bundled catalog name")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--no-cache", action="store_true")
    parser.add_argument("--verbose", action="store_true")
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"morseflow: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code, ctx = run(args.command, args.config, args.out, args.threads,
                        not args.no_cache)
    except (ConfigError, ExpressionError, GeometryError) as exc:
        print(f"morseflow: config error: {exc}", file=sys.stderr)
        return 1
    except (DegenerateCriticalPointError, IncompleteCriticalSetError) as exc:
        print(f"morseflow: {exc}", file=sys.stderr)
        return 1
    except (ConnectionSearchError, FlowError, QuadratureError) as exc:
        print(f"morseflow: numerical failure: {exc}", file=sys.stderr)
        return 2
    for msg in sorted(ctx.failures):
        print(f"verification failed: {msg}", file=sys.stderr)
    print(ctx.out / "report.json")
    return code


if __name__ == "__main__":
    sys.exit(main())
