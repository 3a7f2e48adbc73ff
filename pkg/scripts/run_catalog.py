"""Run `all` on every bundled catalog config and print a one-line summary each."""
import argparse
import json
import time

from morseflow.cli import main
from morseflow.config import catalog_names


def summarize(report: dict) -> str:
    res = report["results"]
    parts = [report["status"]]
    for mode, h in sorted(res.get("homology", {}).items()):
        parts.append(f"H[{mode}]={h['betti']}" + (f" tors={h['torsion']}" if any(h["torsion"]) else ""))
    if "fme" in res:
        parts.append("fme " + " ".join(f"{k}:{v['max_residual']:.1e}" for k, v in res["fme"].items()))
    if "chain_map" in res:
        parts.append("chain " + " ".join(f"{k}:{v['max_residual']:.1e}"
                                         for k, v in res["chain_map"].items()))
    return "  ".join(parts)


def main_() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("names", nargs="*", help="subset of catalog names")
    args = ap.parse_args()
    for name in args.names or catalog_names():
        t0 = time.perf_counter()
        code = main(["all", "--config", name, "--out", args.out, "--threads", str(args.threads)])
        secs = time.perf_counter() - t0
        line = f"{name:18s} exit {code}  {secs:6.1f} s"
        if code in (0, 2):
            with open(f"{args.out}/{name}/report.json") as fh:
                line += "  " + summarize(json.load(fh))
        print(line, flush=True)


if __name__ == "__main__":
    main_()
