import numpy as np
import pytest

from morseflow.connections import find_connections
from morseflow.critical import find_critical_points, negated
from morseflow.expr import FormExpression, parse
from morseflow.flow import GradientFlow
from morseflow.geometry import circle, klein, sphere, torus
from morseflow.morse_complex import ModP, build_complex


class Setup:
    """A manifold, a Morse function, its critical set, flow and connections."""

    def __init__(self, M, text, mode=None):
        self.M = M
        self.f = parse(text, M.ambient_dim)
        self.critical = find_critical_points(M, self.f)
        self.flow = GradientFlow(M, self.f, self.critical)
        self._connections = None
        self.mode = mode

    @property
    def connections(self):
        if self._connections is None:
            self._connections = find_connections(self.flow, self.critical, eps=5e-4)
        return self._connections

    def complex(self, mode=None):
        return build_complex(self.critical, self.connections, mode or self.mode)

    def dual(self, mode=None):
        """Complex of -f on the same critical ids."""
        if not hasattr(self, "_dual"):
            neg = negated(self.critical)
            flow = GradientFlow(self.M, neg.function, neg)
            self._dual = (neg, find_connections(flow, neg, eps=5e-4))
        neg, conn = self._dual
        return build_complex(neg, conn, mode or self.mode)

    def form(self, degree, terms):
        return FormExpression.from_terms(degree, self.M.ambient_dim, terms)


@pytest.fixture(scope="session")
def s1():
    return Setup(circle(), "x")


@pytest.fixture(scope="session")
def s2_height():
    return Setup(sphere(2), "z")


@pytest.fixture(scope="session")
def s2_perturbed():
    return Setup(sphere(2), "z^2 + 0.5*x")


@pytest.fixture(scope="session")
def t2():
    return Setup(torus(2), "cos(2*pi*x) + cos(2*pi*y)")


@pytest.fixture(scope="session")
def klein_setup():
    return Setup(klein(), "cos(4*pi*x) + cos(2*pi*y)", ModP(2))


@pytest.fixture(scope="session")
def area_form():
    return FormExpression.from_terms(
        2, 3, {"y,z": "x/(4*pi)", "z,x": "y/(4*pi)", "x,y": "z/(4*pi)"})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_criteria: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance verdict; the line is printed now and in the summary."""
    def record(number: int, ok: bool, detail: str):
        _criteria[number] = (bool(ok), detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        ok, detail = _criteria[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
