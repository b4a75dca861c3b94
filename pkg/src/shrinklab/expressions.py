"""A small arithmetic expression language for branch formulas and potentials.

Accepted syntax: numeric literals, the variable ``x``, named parameters,
``+ - * /``, powers written ``**``, ``^`` or ``pow(a, b)``, remainders written
``%`` or ``mod``, unary signs and parentheses.  Literals are kept as exact
rationals so that maps such as ``2*x - 1`` can be iterated without rounding.

Expressions evaluate through three backends: vectorised numpy floats,
mpmath at the caller's working precision, and exact rationals for expressions
free of irrational powers.
"""

from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping

import mpmath
import numpy as np

from .errors import ConfigError

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "parse",
    "const",
    "derivative",
    "substitute",
    "to_numpy",
    "eval_mp",
    "eval_exact",
    "to_polynomial",
    "depends_on_x",
]


class Expr:
    """Base class of expression nodes (immutable, hashable)."""

    def __str__(self) -> str:
        return _format(self, 0)

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __pow__(self, other):
        return power(self, _lift(other))

    def __neg__(self):
        return neg(self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: Fraction


@dataclass(frozen=True, eq=True)
class Var(Expr):
    pass


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


X = Var()
ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))


def const(value) -> Const:
    if isinstance(value, Const):
        return value
    if isinstance(value, float) and not math.isfinite(value):
        raise ConfigError(f"non-finite constant {value!r}")
    return Const(Fraction(value))


def _lift(value) -> Expr:
    return value if isinstance(value, Expr) else const(value)


# -- smart constructors with exact constant folding -------------------------

def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if b == ZERO:
        return a
    if a == ZERO:
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if b == ZERO:
        raise ConfigError("division by the constant zero")
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value / b.value)
    if b == ONE:
        return a
    if a == ZERO:
        return ZERO
    return BinOp("/", a, b)


def power(a: Expr, b: Expr) -> Expr:
    if isinstance(b, Const):
        if b.value == 0:
            return ONE
        if b.value == 1:
            return a
        if isinstance(a, Const) and b.value.denominator == 1:
            if a.value == 0 and b.value < 0:
                raise ConfigError("zero raised to a negative power")
            return Const(a.value ** int(b.value))
    return BinOp("**", a, b)


def mod(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        if b.value == 0:
            raise ConfigError("remainder by zero")
        return Const(a.value - b.value * math.floor(a.value / b.value))
    return BinOp("%", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


_BUILDERS = {"+": add, "-": sub, "*": mul, "/": div, "**": power, "%": mod}


# -- parsing ----------------------------------------------------------------

_AST_OPS = {
    ast.Add: "+",
    ast.Sub: "-",
    ast.Mult: "*",
    ast.Div: "/",
    ast.Pow: "**",
    ast.Mod: "%",
}


def parse(text, params: Mapping[str, object] | None = None) -> Expr:
    """Parse ``text`` into an expression tree.

    Parameters
    ----------
    text : str or number or Expr
        Source.  Numbers and ready-made expressions are passed through.
    params : mapping, optional
        Values for named parameters.  Each value may be a number, a string in
        the same grammar, or an :class:`Expr`.

    Raises
    ------
    ConfigError
        On syntax outside the grammar or unknown names.
    """
    if isinstance(text, Expr):
        return text
    if isinstance(text, (int, float, Fraction)) and not isinstance(text, bool):
        return const(text)
    if not isinstance(text, str):
        raise ConfigError(f"cannot parse expression from {type(text).__name__}")
    source = re.sub(r"\bmod\b", "%", text.strip()).replace("^", "**")
    if not source:
        raise ConfigError("empty expression")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    resolved = {}
    for name, value in (params or {}).items():
        resolved[name] = parse(value, None) if not isinstance(value, Expr) else value
    return _convert(tree.body, source, resolved, text)


def _convert(node, source, params, original) -> Expr:
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ConfigError(f"unsupported literal in {original!r}")
        segment = ast.get_source_segment(source, node)
        try:
            return Const(Fraction(segment))
        except (TypeError, ValueError):
            return const(node.value)
    if isinstance(node, ast.Name):
        if node.id == "x":
            return X
        if node.id in params:
            return params[node.id]
        raise ConfigError(f"unknown name {node.id!r} in {original!r}")
    if isinstance(node, ast.UnaryOp):
        operand = _convert(node.operand, source, params, original)
        if isinstance(node.op, ast.USub):
            return neg(operand)
        if isinstance(node.op, ast.UAdd):
            return operand
        raise ConfigError(f"unsupported unary operator in {original!r}")
    if isinstance(node, ast.BinOp):
        op = _AST_OPS.get(type(node.op))
        if op is None:
            raise ConfigError(f"unsupported operator in {original!r}")
        left = _convert(node.left, source, params, original)
        right = _convert(node.right, source, params, original)
        return _BUILDERS[op](left, right)
    if isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id == "pow"):
            raise ConfigError(f"only pow() calls are allowed, in {original!r}")
        if len(node.args) != 2 or node.keywords:
            raise ConfigError("pow() takes exactly two arguments")
        base, exponent = (_convert(a, source, params, original) for a in node.args)
        return power(base, exponent)
    raise ConfigError(f"unsupported syntax in {original!r}")


# -- printing ---------------------------------------------------------------

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "%": 2, "**": 4}


def _format(e: Expr, outer: int) -> str:
    if isinstance(e, Const):
        v = e.value
        text = str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
        needs = v < 0 or (v.denominator != 1 and outer >= 2)
        return f"({text})" if needs else text
    if isinstance(e, Var):
        return "x"
    if isinstance(e, Neg):
        inner = "-" + _format(e.operand, 3)
        return f"({inner})" if outer >= 3 else inner
    prec = _PRECEDENCE[e.op]
    if e.op == "**":
        text = f"{_format(e.left, prec + 1)}**{_format(e.right, prec)}"
    else:
        text = f"{_format(e.left, prec)} {e.op} {_format(e.right, prec + 1)}"
    return f"({text})" if prec < outer else text


# -- analysis ---------------------------------------------------------------

def depends_on_x(e: Expr) -> bool:
    if isinstance(e, Var):
        return True
    if isinstance(e, Const):
        return False
    if isinstance(e, Neg):
        return depends_on_x(e.operand)
    return depends_on_x(e.left) or depends_on_x(e.right)


def substitute(e: Expr, replacement: Expr) -> Expr:
    """``e`` with every ``x`` replaced by ``replacement``."""
    if isinstance(e, Var):
        return replacement
    if isinstance(e, Const):
        return e
    if isinstance(e, Neg):
        return neg(substitute(e.operand, replacement))
    return _BUILDERS[e.op](substitute(e.left, replacement), substitute(e.right, replacement))


def derivative(e: Expr) -> Expr:
    """Symbolic derivative with respect to ``x``.

    Powers need an exponent free of ``x``; a remainder ``u mod c`` with
    constant ``c`` differentiates to ``u'`` (valid away from the jumps).
    """
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Neg):
        return neg(derivative(e.operand))
    a, b = e.left, e.right
    if e.op == "+":
        return add(derivative(a), derivative(b))
    if e.op == "-":
        return sub(derivative(a), derivative(b))
    if e.op == "*":
        return add(mul(derivative(a), b), mul(a, derivative(b)))
    if e.op == "/":
        if not depends_on_x(b):
            return div(derivative(a), b)
        return div(sub(mul(derivative(a), b), mul(a, derivative(b))), power(b, const(2)))
    if e.op == "**":
        if depends_on_x(b):
            raise ConfigError(f"exponent depending on x is not supported: {e}")
        return mul(mul(b, power(a, sub(b, ONE))), derivative(a))
    if e.op == "%":
        if depends_on_x(b):
            raise ConfigError(f"remainder by an x-dependent quantity: {e}")
        return derivative(a)
    raise AssertionError(e.op)


def to_polynomial(e: Expr) -> tuple[Fraction, ...] | None:
    """Exact coefficients (constant term first), or ``None`` if not a polynomial."""
    if isinstance(e, Const):
        return (e.value,)
    if isinstance(e, Var):
        return (Fraction(0), Fraction(1))
    if isinstance(e, Neg):
        p = to_polynomial(e.operand)
        return None if p is None else tuple(-c for c in p)
    if e.op in "+-*":
        p, q = to_polynomial(e.left), to_polynomial(e.right)
        if p is None or q is None:
            return None
        if e.op == "*":
            return poly_mul(p, q)
        sign = 1 if e.op == "+" else -1
        n = max(len(p), len(q))
        return _trim(tuple(
            (p[i] if i < len(p) else 0) + sign * (q[i] if i < len(q) else 0) for i in range(n)
        ))
    if e.op == "/":
        p, q = to_polynomial(e.left), to_polynomial(e.right)
        if p is None or q is None or len(q) != 1:
            return None
        return tuple(c / q[0] for c in p)
    if e.op == "**":
        p = to_polynomial(e.left)
        if p is None or not isinstance(e.right, Const):
            return None
        k = e.right.value
        if k.denominator != 1 or k < 0:
            return None
        out: tuple[Fraction, ...] = (Fraction(1),)
        for _ in range(int(k)):
            out = poly_mul(out, p)
        return out
    return None


def poly_mul(p, q):
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a:
            for j, b in enumerate(q):
                out[i + j] += a * b
    return _trim(tuple(out))


def _trim(p):
    p = list(p)
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return tuple(Fraction(c) for c in p)


# -- evaluation -------------------------------------------------------------

def to_numpy(e: Expr) -> Callable[[np.ndarray], np.ndarray]:
    """Compile to a vectorised float64 function of ``x``."""
    fn = _compile_np(e)

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        return np.array(np.broadcast_to(fn(x), x.shape), dtype=float)

    return evaluate


def _compile_np(e: Expr):
    if isinstance(e, Const):
        v = float(e.value)
        return lambda x: v
    if isinstance(e, Var):
        return lambda x: x
    if isinstance(e, Neg):
        f = _compile_np(e.operand)
        return lambda x: -f(x)
    f, g = _compile_np(e.left), _compile_np(e.right)
    if e.op == "+":
        return lambda x: f(x) + g(x)
    if e.op == "-":
        return lambda x: f(x) - g(x)
    if e.op == "*":
        return lambda x: f(x) * g(x)
    if e.op == "/":
        return lambda x: f(x) / g(x)
    if e.op == "**":
        if isinstance(e.right, Const) and e.right.value.denominator == 1:
            k = int(e.right.value)
            return lambda x: np.power(f(x), k) if k >= 0 else 1.0 / np.power(f(x), -k)
        return lambda x: np.power(f(x), g(x))
    if e.op == "%":
        return lambda x: np.mod(f(x), g(x))
    raise AssertionError(e.op)


def eval_mp(e: Expr, x):
    """Evaluate at the current mpmath working precision."""
    if isinstance(e, Const):
        return mpmath.mpf(e.value.numerator) / e.value.denominator
    if isinstance(e, Var):
        return x
    if isinstance(e, Neg):
        return -eval_mp(e.operand, x)
    a = eval_mp(e.left, x)
    if e.op == "**" and isinstance(e.right, Const) and e.right.value.denominator == 1:
        return a ** int(e.right.value)
    b = eval_mp(e.right, x)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        return a / b
    if e.op == "**":
        return mpmath.power(a, b)
    if e.op == "%":
        return a - b * mpmath.floor(a / b)
    raise AssertionError(e.op)


def eval_exact(e: Expr, x: Fraction) -> Fraction:
    """Exact rational evaluation; raises ``ValueError`` on irrational powers."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return Fraction(x)
    if isinstance(e, Neg):
        return -eval_exact(e.operand, x)
    a, b = eval_exact(e.left, x), eval_exact(e.right, x)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        return a / b
    if e.op == "%":
        return a - b * math.floor(a / b)
    if e.op == "**":
        if b.denominator != 1:
            raise ValueError(f"irrational power in {e}")
        return a ** int(b)
    raise AssertionError(e.op)
