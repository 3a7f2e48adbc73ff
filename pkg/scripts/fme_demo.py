"""Pointwise check of d T + T d = I - P for a 1-form on the height sphere.

Prints each admissible sample with its residual, then the maximum.
"""
import argparse

from morseflow.critical import find_critical_points
from morseflow.currents import admissible_samples, verify_fme
from morseflow.expr import FormExpression, parse
from morseflow.flow import GradientFlow
from morseflow.geometry import sphere


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=10)
    ap.add_argument("--function", default="z")
    args = ap.parse_args()

    M = sphere(2)
    f = parse(args.function, 3)
    cs = find_critical_points(M, f)
    flow = GradientFlow(M, f, cs)
    alpha = FormExpression.from_terms(1, 3, {"x": "y*z", "y": "x + z^2", "z": "sin(x)"})
    rep = verify_fme(flow, alpha, admissible_samples(flow, args.samples))
    for s in rep["samples"]:
        x = ", ".join(f"{v:+.4f}" for v in s["point"])
        print(f"({x})  residual {s['residual']:.3e}")
    print(f"max residual {rep['max_residual']:.3e}")


if __name__ == "__main__":
    main()
