"""Numerical Morse homology and flow currents on catalog manifolds."""

__version__ = "0.1.0"
