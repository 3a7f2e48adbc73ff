"""Closed-form scalar expressions, second-order forward-mode jets, and
differential forms with expression coefficients.

Expressions are parsed into a small immutable AST.  Evaluation comes in
three flavours that must agree:

* :func:`eval_jet` walks the tree with :class:`Jet` values (value, gradient,
  Hessian propagated together).
* :meth:`ScalarExpression.jet_function` stages the same forward-mode rules
  into straight-line Python source once and returns a fast callable.  The
  flow integrator calls this thousands of times per trajectory.
* :meth:`ScalarExpression.vectorized` evaluates values only, on numpy arrays.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "ExpressionError",
    "ExpressionSyntaxError",
    "ExpressionDomainError",
    "Node",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Pow",
    "Call",
    "ScalarExpression",
    "Jet",
    "JetValue",
    "parse",
    "eval_jet",
    "diff",
    "FormExpression",
    "eval_form",
    "exterior_derivative",
    "wedge",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")
ALIASES = ("x", "y", "z", "w")


class ExpressionError(ValueError):
    pass


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ExpressionDomainError(ExpressionError, ArithmeticError):
    pass


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Node:
    pass


@dataclass(frozen=True)
class Const(Node):
    value: float
    name: str | None = None


@dataclass(frozen=True)
class Var(Node):
    index: int


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class BinOp(Node):
    op: str  # one of + - * /
    left: Node
    right: Node


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: int


@dataclass(frozen=True)
class Call(Node):
    func: str
    arg: Node


ZERO = Const(0.0)
ONE = Const(1.0)


def _is_const(node: Node, value: float | None = None) -> bool:
    return isinstance(node, Const) and (value is None or node.value == value)


def _max_var(node: Node) -> int:
    if isinstance(node, Var):
        return node.index
    if isinstance(node, (Neg, Pow, Call)):
        return _max_var(node.arg if not isinstance(node, Pow) else node.base)
    if isinstance(node, BinOp):
        return max(_max_var(node.left), _max_var(node.right))
    return -1


def to_text(node: Node) -> str:
    if isinstance(node, Const):
        if node.name is not None:
            return node.name
        text = repr(float(node.value))
        return f"({text})" if text.startswith("-") else text
    if isinstance(node, Var):
        return f"x{node.index + 1}"
    if isinstance(node, Neg):
        return f"(-{to_text(node.arg)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    if isinstance(node, Pow):
        return f"{to_text(node.base)}^{node.exponent}" if node.exponent >= 0 \
            else f"{to_text(node.base)}^(-{-node.exponent})"
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    raise TypeError(node)


# --------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            offset = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionSyntaxError(f"unexpected character {text[offset]!r}", offset)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    # precedence: + - < * / < unary - < ^
    def __init__(self, text: str, num_vars: int):
        self.text = text
        self.num_vars = num_vars
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, value: str):
        kind, text, offset = self.advance()
        if text != value or kind == "end":
            what = "end of input" if kind == "end" else repr(text)
            raise ExpressionSyntaxError(f"expected {value!r}, found {what}", offset)

    def parse(self) -> Node:
        node = self.additive()
        kind, text, offset = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected token {text!r}", offset)
        return node

    def additive(self) -> Node:
        node = self.multiplicative()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.multiplicative())
        return node

    def multiplicative(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.advance()
            return Neg(self.unary())
        if self.peek()[0] == "op" and self.peek()[1] == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        node = self.primary()
        while self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            node = Pow(node, self.integer_exponent())
        return node

    def integer_exponent(self) -> int:
        kind, text, offset = self.peek()
        sign = 1
        parens = 0
        while kind == "op" and text == "(":
            self.advance()
            parens += 1
            kind, text, offset = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            sign = -1
            kind, text, offset = self.peek()
        if kind != "num":
            raise ExpressionSyntaxError("exponent must be an integer literal", offset)
        self.advance()
        value = float(text)
        if value != int(value):
            raise ExpressionSyntaxError("exponent must be an integer literal", offset)
        for _ in range(parens):
            self.expect(")")
        return sign * int(value)

    def primary(self) -> Node:
        kind, text, offset = self.advance()
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            return self.name(text, offset)
        if kind == "op" and text == "(":
            node = self.additive()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(text)
        raise ExpressionSyntaxError(f"unexpected {what}", offset)

    def name(self, text: str, offset: int) -> Node:
        if text == "pi":
            return Const(math.pi, "pi")
        if text in FUNCTIONS:
            self.expect("(")
            args = [self.additive()]
            while self.peek()[0] == "op" and self.peek()[1] == ",":
                self.advance()
                args.append(self.additive())
            self.expect(")")
            if len(args) != 1:
                raise ExpressionSyntaxError(
                    f"{text} takes 1 argument, got {len(args)}", offset)
            return Call(text, args[0])
        m = re.fullmatch(r"x(\d+)", text)
        if m:
            index = int(m.group(1)) - 1
            if not 0 <= index < self.num_vars:
                raise ExpressionError(
                    f"unknown identifier {text!r} at offset {offset} "
                    f"(expression has {self.num_vars} variables)")
            return Var(index)
        if text in ALIASES and self.num_vars <= 4:
            index = ALIASES.index(text)
            if index < self.num_vars:
                return Var(index)
        raise ExpressionError(f"unknown identifier {text!r} at offset {offset}")


# --------------------------------------------------------------------------
# jets


class Jet:
    """Second-order forward-mode number: value, gradient and Hessian."""

    __slots__ = ("value", "grad", "hess")

    def __init__(self, value, grad, hess):
        self.value = value
        self.grad = grad
        self.hess = hess

    @classmethod
    def variable(cls, value: float, index: int, n: int) -> "Jet":
        g = np.zeros(n)
        g[index] = 1.0
        return cls(float(value), g, np.zeros((n, n)))

    @classmethod
    def variables(cls, point: Sequence[float]) -> list["Jet"]:
        n = len(point)
        return [cls.variable(v, i, n) for i, v in enumerate(point)]

    @classmethod
    def constant(cls, value: float, n: int) -> "Jet":
        return cls(float(value), np.zeros(n), np.zeros((n, n)))

    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, len(self.grad))

    def __add__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.value + other, self.grad, self.hess)
        return Jet(self.value + other.value, self.grad + other.grad, self.hess + other.hess)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.value, -self.grad, -self.hess)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.value * other, self.grad * other, self.hess * other)
        outer = np.outer(self.grad, other.grad)
        return Jet(
            self.value * other.value,
            self.value * other.grad + other.value * self.grad,
            self.value * other.hess + other.value * self.hess + outer + outer.T,
        )

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        v = self.value
        if v == 0.0:
            raise ExpressionDomainError("division by zero")
        return self._chain(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            if other == 0:
                raise ExpressionDomainError("division by zero")
            return self * (1.0 / other)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n: int):
        if n != int(n):
            raise ExpressionError("only integer powers are supported")
        n = int(n)
        if n == 0:
            return Jet.constant(1.0, len(self.grad))
        v = self.value
        if n < 0 and v == 0.0:
            raise ExpressionDomainError("negative power of zero")
        d2 = n * (n - 1) * v ** (n - 2) if n >= 2 or v != 0.0 else 0.0
        d1 = n * v ** (n - 1) if n >= 1 or v != 0.0 else 0.0
        return self._chain(v**n, d1, d2)

    def _chain(self, value, d1, d2) -> "Jet":
        return Jet(value, d1 * self.grad, d1 * self.hess + d2 * np.outer(self.grad, self.grad))

    def sin(self):
        s, c = math.sin(self.value), math.cos(self.value)
        return self._chain(s, c, -s)

    def cos(self):
        s, c = math.sin(self.value), math.cos(self.value)
        return self._chain(c, -s, -c)

    def exp(self):
        e = math.exp(self.value)
        return self._chain(e, e, e)

    def log(self):
        v = self.value
        if v <= 0.0:
            raise ExpressionDomainError(f"log of nonpositive value {v}")
        return self._chain(math.log(v), 1.0 / v, -1.0 / v**2)

    def sqrt(self):
        v = self.value
        if v <= 0.0:
            raise ExpressionDomainError(f"sqrt of nonpositive value {v}")
        r = math.sqrt(v)
        return self._chain(r, 0.5 / r, -0.25 / (r * v))

    def __repr__(self):
        return f"Jet({self.value!r}, grad={self.grad!r})"


@dataclass(frozen=True)
class JetValue:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray


def _jet_eval(node: Node, xs: list[Jet]) -> Jet:
    n = len(xs)
    if isinstance(node, Const):
        return Jet.constant(node.value, n)
    if isinstance(node, Var):
        return xs[node.index]
    if isinstance(node, Neg):
        return -_jet_eval(node.arg, xs)
    if isinstance(node, BinOp):
        a = _jet_eval(node.left, xs)
        b = _jet_eval(node.right, xs)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return a / b
    if isinstance(node, Pow):
        return _jet_eval(node.base, xs) ** node.exponent
    if isinstance(node, Call):
        return getattr(_jet_eval(node.arg, xs), node.func)()
    raise TypeError(node)


# --------------------------------------------------------------------------
# staged code generation


class _Emitter:
    """Straight-line code for value/gradient/Hessian with structural zeros."""

    def __init__(self, n: int, order: int, lib: str = "math"):
        self.n = n
        self.order = order
        self.lib = lib
        self.lines: list[str] = []
        self.count = 0
        self.consts: list[float] = []

    def fresh(self, expr: str) -> str:
        name = f"t{self.count}"
        self.count += 1
        self.lines.append(f"    {name} = {expr}")
        return name

    def const(self, value: float) -> str:
        self.consts.append(float(value))
        return f"c{len(self.consts) - 1}"

    def zero_jet(self, v: str):
        return v, [None] * self.n, {}

    # jet = (value, grad list[str|None], hess dict[(i,j)] -> str) with i<=j
    def emit(self, node: Node):
        n = self.n
        if isinstance(node, Const):
            return self.zero_jet(self.const(node.value))
        if isinstance(node, Var):
            g = [None] * n
            g[node.index] = "1.0"
            return f"x[{node.index}]" if self.lib == "math" else f"x[{node.index}]", g, {}
        if isinstance(node, Neg):
            v, g, h = self.emit(node.arg)
            nv = self.fresh(f"-{v}")
            ng = [None if gi is None else self._neg(gi) for gi in g]
            nh = {k: self._neg(e) for k, e in h.items()} if self.order >= 2 else {}
            return nv, ng, nh
        if isinstance(node, BinOp):
            a = self.emit(node.left)
            b = self.emit(node.right)
            if node.op in "+-":
                return self._addsub(a, b, node.op)
            if node.op == "*":
                return self._mul(a, b)
            return self._mul(a, self._reciprocal(b))
        if isinstance(node, Pow):
            a = self.emit(node.base)
            k = node.exponent
            if k == 0:
                return self.zero_jet("1.0")
            if k == 1:
                return a
            v = a[0]
            if k < 0:
                self.lines.append(f"    if {v} == 0.0: raise ZeroDivisionError")
            val = self.fresh(f"{v} ** {k}")
            d1 = self.fresh(f"{k} * {v} ** {k - 1}") if self.order >= 1 else None
            d2 = self.fresh(f"{k * (k - 1)} * {v} ** {k - 2}") if self.order >= 2 and k != 1 else None
            return self._chain(a, val, d1, d2)
        if isinstance(node, Call):
            a = self.emit(node.arg)
            v = a[0]
            L = self.lib
            if node.func == "sin":
                val = self.fresh(f"{L}.sin({v})")
                d1 = self.fresh(f"{L}.cos({v})") if self.order >= 1 else None
                d2 = self.fresh(f"-{val}") if self.order >= 2 else None
            elif node.func == "cos":
                val = self.fresh(f"{L}.cos({v})")
                d1 = self.fresh(f"-{L}.sin({v})") if self.order >= 1 else None
                d2 = self.fresh(f"-{val}") if self.order >= 2 else None
            elif node.func == "exp":
                val = self.fresh(f"{L}.exp({v})")
                d1 = val
                d2 = val
            elif node.func == "log":
                if self.lib == "math":
                    self.lines.append(f"    if {v} <= 0.0: raise ValueError('log')")
                val = self.fresh(f"{L}.log({v})")
                d1 = self.fresh(f"1.0 / {v}") if self.order >= 1 else None
                d2 = self.fresh(f"-{d1} * {d1}") if self.order >= 2 else None
            elif node.func == "sqrt":
                if self.lib == "math":
                    self.lines.append(f"    if {v} <= 0.0: raise ValueError('sqrt')")
                val = self.fresh(f"{L}.sqrt({v})")
                d1 = self.fresh(f"0.5 / {val}") if self.order >= 1 else None
                d2 = self.fresh(f"-0.25 / ({val} * {v})") if self.order >= 2 else None
            else:
                raise TypeError(node.func)
            return self._chain(a, val, d1, d2)
        raise TypeError(node)

    @staticmethod
    def _neg(e: str) -> str:
        return f"(-{e})"

    def _addsub(self, a, b, op):
        va, ga, ha = a
        vb, gb, hb = b
        val = self.fresh(f"{va} {op} {vb}")
        g = []
        for x, y in zip(ga, gb):
            if self.order < 1:
                g.append(None)
            elif y is None:
                g.append(x)
            elif x is None:
                g.append(y if op == "+" else self.fresh(f"-{y}"))
            else:
                g.append(self.fresh(f"{x} {op} {y}"))
        h = {}
        if self.order >= 2:
            for key in set(ha) | set(hb):
                x, y = ha.get(key), hb.get(key)
                if y is None:
                    h[key] = x
                elif x is None:
                    h[key] = y if op == "+" else self.fresh(f"-{y}")
                else:
                    h[key] = self.fresh(f"{x} {op} {y}")
        return val, g, h

    def _mul(self, a, b):
        va, ga, ha = a
        vb, gb, hb = b
        val = self.fresh(f"{va} * {vb}")
        g = [None] * self.n
        if self.order >= 1:
            for i in range(self.n):
                terms = []
                if gb[i] is not None:
                    terms.append(f"{va} * {gb[i]}")
                if ga[i] is not None:
                    terms.append(f"{vb} * {ga[i]}")
                if terms:
                    g[i] = self.fresh(" + ".join(terms))
        h = {}
        if self.order >= 2:
            keys = set(ha) | set(hb)
            keys |= {(i, j) for i in range(self.n) for j in range(i, self.n)
                     if (ga[i] is not None and gb[j] is not None)
                     or (ga[j] is not None and gb[i] is not None)}
            for i, j in sorted(keys):
                terms = []
                if (i, j) in hb:
                    terms.append(f"{va} * {hb[(i, j)]}")
                if (i, j) in ha:
                    terms.append(f"{vb} * {ha[(i, j)]}")
                if ga[i] is not None and gb[j] is not None:
                    terms.append(f"{ga[i]} * {gb[j]}")
                if ga[j] is not None and gb[i] is not None:
                    terms.append(f"{ga[j]} * {gb[i]}")
                h[(i, j)] = self.fresh(" + ".join(terms))
        return val, g, h

    def _reciprocal(self, b):
        vb = b[0]
        if self.lib == "math":
            self.lines.append(f"    if {vb} == 0.0: raise ZeroDivisionError")
        val = self.fresh(f"1.0 / {vb}")
        d1 = self.fresh(f"-{val} * {val}") if self.order >= 1 else None
        d2 = self.fresh(f"2.0 * {val} * {val} * {val}") if self.order >= 2 else None
        return self._chain(b, val, d1, d2)

    def _chain(self, a, val, d1, d2):
        _, ga, ha = a
        g = [None] * self.n
        h = {}
        if self.order >= 1:
            g = [None if gi is None else self.fresh(f"{d1} * {gi}") for gi in ga]
        if self.order >= 2:
            keys = set(ha) | {(i, j) for i in range(self.n) for j in range(i, self.n)
                              if ga[i] is not None and ga[j] is not None}
            for i, j in sorted(keys):
                terms = []
                if (i, j) in ha:
                    terms.append(f"{d1} * {ha[(i, j)]}")
                if ga[i] is not None and ga[j] is not None:
                    terms.append(f"{d2} * {ga[i]} * {ga[j]}")
                h[(i, j)] = self.fresh(" + ".join(terms))
        return val, g, h


def _compile_jet(node: Node, n: int, order: int) -> Callable:
    em = _Emitter(n, order)
    v, g, h = em.emit(node)
    body = list(em.lines)
    if order == 0:
        body.append(f"    return {v}")
    else:
        gs = ", ".join("0.0" if gi is None else gi for gi in g)
        if order == 1:
            body.append(f"    return {v}, ({gs},)")
        else:
            rows = []
            for i in range(n):
                row = []
                for j in range(n):
                    key = (min(i, j), max(i, j))
                    row.append(h.get(key) or "0.0")
                rows.append("(" + ", ".join(row) + ",)")
            body.append(f"    return {v}, ({gs},), ({', '.join(rows)},)")
    args = ", ".join(f"c{i}={c!r}" for i, c in enumerate(em.consts))
    header = f"def _f(x{', ' if args else ''}{args}):"
    src = header + "\n" + "\n".join(body) + "\n"
    ns: dict = {"math": math}
    exec(compile(src, "<jet>", "exec"), ns)
    return ns["_f"]


def _compile_vectorized(node: Node, n: int) -> Callable:
    em = _Emitter(n, 0, lib="np")
    v, _, _ = em.emit(node)
    args = ", ".join(f"c{i}={c!r}" for i, c in enumerate(em.consts))
    src = (f"def _f(x{', ' if args else ''}{args}):\n" + "\n".join(em.lines)
           + f"\n    return {v} + 0.0 * x[0]\n")
    ns: dict = {"np": np}
    exec(compile(src, "<vectorized>", "exec"), ns)
    return ns["_f"]


# --------------------------------------------------------------------------
# public expression type


class ScalarExpression:
    """A parsed closed-form function of ``num_vars`` variables.

    Immutable; compiled evaluators are built lazily and cached on the
    instance, so sharing one expression between threads is safe.
    """

    def __init__(self, ast: Node, num_vars: int, source: str | None = None):
        if num_vars < 1:
            raise ExpressionError("num_vars must be >= 1")
        if _max_var(ast) >= num_vars:
            raise ExpressionError(
                f"variable x{_max_var(ast) + 1} out of range for {num_vars} variables")
        self.ast = ast
        self.num_vars = num_vars
        self.source = source

    def __repr__(self):
        return f"ScalarExpression({self.text!r}, num_vars={self.num_vars})"

    def __eq__(self, other):
        return isinstance(other, ScalarExpression) and self.ast == other.ast \
            and self.num_vars == other.num_vars

    def __hash__(self):
        return hash((self.text, self.num_vars))

    @cached_property
    def text(self) -> str:
        return to_text(self.ast)

    @cached_property
    def _f0(self):
        return _compile_jet(self.ast, self.num_vars, 0)

    @cached_property
    def _f1(self):
        return _compile_jet(self.ast, self.num_vars, 1)

    @cached_property
    def _f2(self):
        return _compile_jet(self.ast, self.num_vars, 2)

    @cached_property
    def vectorized(self) -> Callable:
        """Value-only evaluator taking ``x`` of shape (num_vars, ...)."""
        return _compile_vectorized(self.ast, self.num_vars)

    def jet_function(self, order: int = 2) -> Callable:
        """Fast evaluator returning value, (value, grad) or (value, grad, hess)
        as nested tuples of floats."""
        return (self._f0, self._f1, self._f2)[order]

    def __call__(self, point) -> float:
        try:
            return self._f0(point)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise ExpressionDomainError(f"{self.text} undefined at {list(point)}") from exc

    def value(self, point) -> float:
        return self(point)

    def jet(self, point) -> JetValue:
        try:
            v, g, h = self._f2(point)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise ExpressionDomainError(f"{self.text} undefined at {list(point)}") from exc
        return JetValue(v, np.array(g), np.array(h))

    # algebra, used by forms
    def __neg__(self):
        return ScalarExpression(_fold(Neg(self.ast)), self.num_vars)

    def __add__(self, other):
        return ScalarExpression(_fold(BinOp("+", self.ast, _node(other))), self.num_vars)

    def __sub__(self, other):
        return ScalarExpression(_fold(BinOp("-", self.ast, _node(other))), self.num_vars)

    def __mul__(self, other):
        return ScalarExpression(_fold(BinOp("*", self.ast, _node(other))), self.num_vars)

    def diff(self, index: int) -> "ScalarExpression":
        return ScalarExpression(diff(self.ast, index), self.num_vars)

    @classmethod
    def constant(cls, value: float, num_vars: int) -> "ScalarExpression":
        return cls(Const(float(value)), num_vars)


def _node(other) -> Node:
    if isinstance(other, ScalarExpression):
        return other.ast
    if isinstance(other, Node):
        return other
    return Const(float(other))


def parse(text: str, num_vars: int) -> ScalarExpression:
    """Parse ``text`` over variables x1..xN (aliases x, y, z, w when N <= 4)."""
    if not isinstance(text, str):
        raise ExpressionError("expression text must be a string")
    ast = _Parser(text, num_vars).parse()
    return ScalarExpression(ast, num_vars, source=text)


def eval_jet(e: ScalarExpression, point) -> JetValue:
    """Value, gradient and Hessian at ``point`` by tree-walking forward mode."""
    point = np.asarray(point, dtype=float)
    if point.shape != (e.num_vars,):
        raise ExpressionError(f"point has {point.size} coordinates, expected {e.num_vars}")
    try:
        j = _jet_eval(e.ast, Jet.variables(point))
    except (ValueError, ZeroDivisionError, OverflowError) as exc:
        if isinstance(exc, ExpressionError) and not isinstance(exc, ExpressionDomainError):
            raise
        raise ExpressionDomainError(f"{e.text} undefined at {point.tolist()}: {exc}") from exc
    hess = 0.5 * (j.hess + j.hess.T)
    return JetValue(float(j.value), np.asarray(j.grad, dtype=float), hess)


# --------------------------------------------------------------------------
# symbolic differentiation with light folding


def _fold(node: Node) -> Node:
    if isinstance(node, Neg):
        if _is_const(node.arg):
            return Const(-node.arg.value)
        if isinstance(node.arg, Neg):
            return node.arg.arg
        return node
    if isinstance(node, BinOp):
        a, b = node.left, node.right
        if _is_const(a) and _is_const(b) and a.name is None and b.name is None:
            if node.op == "+":
                return Const(a.value + b.value)
            if node.op == "-":
                return Const(a.value - b.value)
            if node.op == "*":
                return Const(a.value * b.value)
        if node.op == "+":
            if _is_const(a, 0.0):
                return b
            if _is_const(b, 0.0):
                return a
        if node.op == "-":
            if _is_const(b, 0.0):
                return a
            if _is_const(a, 0.0):
                return _fold(Neg(b))
        if node.op == "*":
            if _is_const(a, 0.0) or _is_const(b, 0.0):
                return ZERO
            if _is_const(a, 1.0):
                return b
            if _is_const(b, 1.0):
                return a
        if node.op == "/":
            if _is_const(a, 0.0):
                return ZERO
            if _is_const(b, 1.0):
                return a
    return node


def diff(node: Node, i: int) -> Node:
    """Symbolic partial derivative with respect to variable ``i``."""
    if isinstance(node, Const):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.index == i else ZERO
    if isinstance(node, Neg):
        return _fold(Neg(diff(node.arg, i)))
    if isinstance(node, BinOp):
        a, b = node.left, node.right
        da, db = diff(a, i), diff(b, i)
        if node.op in "+-":
            return _fold(BinOp(node.op, da, db))
        if node.op == "*":
            return _fold(BinOp("+", _fold(BinOp("*", da, b)), _fold(BinOp("*", a, db))))
        # (a/b)' = a'/b - a b'/b^2
        t1 = _fold(BinOp("/", da, b))
        t2 = _fold(BinOp("/", _fold(BinOp("*", a, db)), Pow(b, 2)))
        return _fold(BinOp("-", t1, t2))
    if isinstance(node, Pow):
        k = node.exponent
        if k == 0:
            return ZERO
        db = diff(node.base, i)
        inner = Const(float(k)) if k - 1 == 0 else \
            _fold(BinOp("*", Const(float(k)), node.base if k - 1 == 1 else Pow(node.base, k - 1)))
        return _fold(BinOp("*", inner, db))
    if isinstance(node, Call):
        a = node.arg
        da = diff(a, i)
        if _is_const(da, 0.0):
            return ZERO
        outer = {
            "sin": lambda: Call("cos", a),
            "cos": lambda: Neg(Call("sin", a)),
            "exp": lambda: node,
            "log": lambda: BinOp("/", ONE, a),
            "sqrt": lambda: BinOp("/", Const(0.5), node),
        }[node.func]()
        return _fold(BinOp("*", outer, da))
    raise TypeError(node)


# --------------------------------------------------------------------------
# differential forms


def _sort_with_sign(index: Sequence[int]) -> tuple[tuple[int, ...], int]:
    idx = list(index)
    sign = 1
    for i in range(len(idx)):
        for j in range(len(idx) - 1 - i):
            if idx[j] > idx[j + 1]:
                idx[j], idx[j + 1] = idx[j + 1], idx[j]
                sign = -sign
    if len(set(idx)) != len(idx):
        return tuple(idx), 0
    return tuple(idx), sign


class FormExpression:
    """A differential k-form sum_I a_I dx_I with expression coefficients.

    Multi-indices are stored strictly increasing; the constructor accepts
    any ordering and folds the permutation sign into the coefficient.
    """

    def __init__(self, degree: int, num_vars: int,
                 coefficients: Mapping[Sequence[int], ScalarExpression | str | float]):
        if degree < 0 or degree > num_vars:
            raise ExpressionError(f"degree {degree} impossible with {num_vars} variables")
        self.degree = degree
        self.num_vars = num_vars
        coeffs: dict[tuple[int, ...], ScalarExpression] = {}
        for index, c in coefficients.items():
            index = tuple(int(i) for i in index)
            if len(index) != degree:
                raise ExpressionError(f"multi-index {index} does not have length {degree}")
            if any(not 0 <= i < num_vars for i in index):
                raise ExpressionError(f"multi-index {index} out of range")
            key, sign = _sort_with_sign(index)
            if sign == 0:
                continue
            if isinstance(c, str):
                c = parse(c, num_vars)
            elif not isinstance(c, ScalarExpression):
                c = ScalarExpression.constant(c, num_vars)
            if c.num_vars != num_vars:
                raise ExpressionError("coefficient has the wrong number of variables")
            if sign < 0:
                c = -c
            coeffs[key] = coeffs[key] + c if key in coeffs else c
        if degree == 0 and not coeffs:
            coeffs[()] = ScalarExpression.constant(0.0, num_vars)
        self.coefficients = dict(sorted(coeffs.items()))

    def __repr__(self):
        terms = ", ".join(f"{k}: {v.text}" for k, v in self.coefficients.items())
        return f"FormExpression(degree={self.degree}, {{{terms}}})"

    @classmethod
    def from_terms(cls, degree: int, num_vars: int, terms: Mapping[str, str]) -> "FormExpression":
        """Build from ``{"x,y": "coef", ...}``-style keys of variable names."""
        coeffs = {}
        for key, text in terms.items():
            names = [s.strip() for s in key.split(",") if s.strip()]
            index = []
            for name in names:
                m = re.fullmatch(r"x(\d+)", name)
                if m:
                    index.append(int(m.group(1)) - 1)
                elif name in ALIASES and num_vars <= 4:
                    index.append(ALIASES.index(name))
                else:
                    raise ExpressionError(f"unknown differential d{name}")
            coeffs[tuple(index)] = (coeffs[tuple(index)] + parse(str(text), num_vars)) \
                if tuple(index) in coeffs else str(text)
        return cls(degree, num_vars, coeffs)

    @cached_property
    def _coefficient_function(self) -> Callable:
        nodes = [c.ast for c in self.coefficients.values()]
        em = _Emitter(self.num_vars, 0)
        vals = [em.emit(nd)[0] for nd in nodes]
        args = ", ".join(f"c{i}={c!r}" for i, c in enumerate(em.consts))
        src = (f"def _f(x{', ' if args else ''}{args}):\n" + "\n".join(em.lines)
               + f"\n    return ({''.join(v + ', ' for v in vals)})\n")
        ns: dict = {"math": math}
        exec(compile(src, "<form>", "exec"), ns)
        return ns["_f"]

    @cached_property
    def _index_array(self) -> np.ndarray:
        return np.array(list(self.coefficients.keys()), dtype=int).reshape(
            len(self.coefficients), self.degree)

    def coefficient_values(self, point) -> np.ndarray:
        try:
            return np.array(self._coefficient_function(point))
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise ExpressionDomainError(f"form undefined at {list(point)}") from exc

    def evaluate(self, point, vectors) -> float:
        return eval_form(self, point, vectors)

    def scaled(self, factor: float) -> "FormExpression":
        return FormExpression(self.degree, self.num_vars,
                              {k: v * float(factor) for k, v in self.coefficients.items()})

    def __add__(self, other: "FormExpression") -> "FormExpression":
        if other.degree != self.degree or other.num_vars != self.num_vars:
            raise ExpressionError("cannot add forms of different degree")
        coeffs = dict(self.coefficients)
        for k, v in other.coefficients.items():
            coeffs[k] = coeffs[k] + v if k in coeffs else v
        return FormExpression(self.degree, self.num_vars, coeffs)

    def is_zero(self) -> bool:
        return all(_is_const(c.ast, 0.0) for c in self.coefficients.values())


def eval_form(form: FormExpression, point, vectors) -> float:
    """sum_I a_I(point) det(minor_I) for the k x N matrix of ``vectors``."""
    vectors = np.asarray(vectors, dtype=float).reshape(-1, form.num_vars) \
        if form.degree else np.zeros((0, form.num_vars))
    if vectors.shape[0] != form.degree:
        raise ExpressionError(
            f"{form.degree}-form evaluated on {vectors.shape[0]} vectors")
    if not form.coefficients:
        return 0.0
    coeffs = form.coefficient_values(point)
    k = form.degree
    if k == 0:
        return float(coeffs[0])
    idx = form._index_array
    if k == 1:
        return float(np.dot(coeffs, vectors[0, idx[:, 0]]))
    minors = vectors[:, idx]  # (k, terms, k)
    minors = np.transpose(minors, (1, 0, 2))
    if k == 2:
        dets = minors[:, 0, 0] * minors[:, 1, 1] - minors[:, 0, 1] * minors[:, 1, 0]
    else:
        dets = np.linalg.det(minors)
    return float(np.dot(coeffs, dets))


def exterior_derivative(form: FormExpression) -> FormExpression:
    """d(sum a_I dx_I) = sum_j (da_I/dx_j) dx_j ^ dx_I."""
    n = form.num_vars
    coeffs: dict[tuple[int, ...], ScalarExpression] = {}
    if form.degree == n:
        return FormExpression(n, n, {})
    for index, a in form.coefficients.items():
        for j in range(n):
            if j in index:
                continue
            da = a.diff(j)
            if _is_const(da.ast, 0.0):
                continue
            key, sign = _sort_with_sign((j,) + index)
            term = da if sign > 0 else -da
            coeffs[key] = coeffs[key] + term if key in coeffs else term
    return FormExpression(form.degree + 1, n, coeffs)


def wedge(a: FormExpression, b: FormExpression) -> FormExpression:
    if a.num_vars != b.num_vars:
        raise ExpressionError("forms live on different spaces")
    n = a.num_vars
    if a.degree + b.degree > n:
        raise ExpressionError(f"a {a.degree + b.degree}-form does not exist on R^{n}")
    coeffs: dict[tuple[int, ...], ScalarExpression] = {}
    for (ia, ca), (ib, cb) in itertools.product(a.coefficients.items(), b.coefficients.items()):
        key, sign = _sort_with_sign(ia + ib)
        if sign == 0:
            continue
        term = ca * cb
        if sign < 0:
            term = -term
        coeffs[key] = coeffs[key] + term if key in coeffs else term
    return FormExpression(a.degree + b.degree, n, coeffs)
