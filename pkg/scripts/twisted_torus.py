"""Morse homology of the flat torus with each rank-one sign system."""
import itertools

import numpy as np

from morseflow.connections import find_connections
from morseflow.critical import find_critical_points
from morseflow.expr import parse
from morseflow.flow import GradientFlow
from morseflow.geometry import torus
from morseflow.morse_complex import LocalSystem, Twisted, build_complex, homology


def main() -> None:
    M = torus(2)
    f = parse("cos(2*pi*x) + cos(2*pi*y)", 2)
    cs = find_critical_points(M, f)
    conn = find_connections(GradientFlow(M, f, cs), cs)
    for a, b in itertools.product((1, -1), repeat=2):
        system = LocalSystem((np.array([[a]]), np.array([[b]])))
        H = homology(build_complex(cs, conn, Twisted(system)))
        print(f"rho = ({a:+d}, {b:+d})  betti {H.betti}  torsion {H.torsion}")


if __name__ == "__main__":
    main()
