"""Closed-form expression trees and their prefix s-expression text form.

Primitives: numeric constants, coordinates ``x1 .. xD`` (1-based in text),
``+``, ``*``, ``-``, ``/``, ``pow`` with a constant exponent, ``sin``,
``cos``, ``exp``, ``log`` and ``sqrt``.  Trees evaluate on :class:`Jet`
points, so every derivative is exact forward-mode AD.

>>> e = parse("(sin (* x1 x2))")
>>> to_sexpr(e)
'(sin (* x1 x2))'
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .jet import Jet

_UNARY = ("sin", "cos", "exp", "log", "sqrt", "neg")
_TOKEN = re.compile(r"\(|\)|[^\s()]+")
_VAR = re.compile(r"x(\d+)$")
_NAMED = {"pi": math.pi, "e": math.e}


class ExpressionSyntaxError(ValueError):
    """Malformed s-expression text."""


@dataclass(frozen=True)
class Expr:
    """Immutable node.  ``op`` is one of const, var, +, *, -, /, pow, or a unary name."""

    op: str
    args: tuple["Expr", ...] = ()
    value: float = 0.0
    index: int = -1  # 0-based coordinate slot for ``var``

    # -- builders with light constant folding ------------------------------
    def __add__(self, other: "ExprLike") -> "Expr":
        return add(self, other)

    def __radd__(self, other: "ExprLike") -> "Expr":
        return add(other, self)

    def __mul__(self, other: "ExprLike") -> "Expr":
        return mul(self, other)

    def __rmul__(self, other: "ExprLike") -> "Expr":
        return mul(other, self)

    def __sub__(self, other: "ExprLike") -> "Expr":
        return sub(self, other)

    def __rsub__(self, other: "ExprLike") -> "Expr":
        return sub(other, self)

    def __neg__(self) -> "Expr":
        return neg(self)

    def __truediv__(self, other: "ExprLike") -> "Expr":
        return div(self, other)

    def __rtruediv__(self, other: "ExprLike") -> "Expr":
        return div(other, self)

    def __pow__(self, exponent: float) -> "Expr":
        return power(self, exponent)

    def __str__(self) -> str:
        return to_sexpr(self)

    # -- queries -----------------------------------------------------------
    @property
    def is_const(self) -> bool:
        return self.op == "const"

    def max_index(self) -> int:
        """Largest coordinate slot used (0-based), or -1 for constants."""
        if self.op == "var":
            return self.index
        return max((a.max_index() for a in self.args), default=-1)

    # -- evaluation ----------------------------------------------------------
    def at(self, point: Jet) -> Union[Jet, float]:
        """Evaluate on a point jet of value shape ``(D,)``; constants stay floats."""
        op = self.op
        if op == "const":
            return self.value
        if op == "var":
            return point[self.index]
        vals = [a.at(point) for a in self.args]
        if op == "+":
            acc = vals[0]
            for v in vals[1:]:
                acc = acc + v
            return acc
        if op == "*":
            acc = vals[0]
            for v in vals[1:]:
                acc = _mul(acc, v)
            return acc
        if op == "-":
            return vals[0] - vals[1]
        if op == "neg":
            return -vals[0]
        if op == "/":
            num, den = vals
            if isinstance(den, Jet):
                return _mul(num, den.reciprocal())
            return num / den if not isinstance(num, Jet) else num.scale(1.0 / den)
        if op == "pow":
            base, expo = vals[0], self.args[1].value
            return base.power(expo) if isinstance(base, Jet) else float(base) ** expo
        if op in _UNARY:
            v = vals[0]
            if isinstance(v, Jet):
                return getattr(v, op)()
            return float(getattr(np, op)(v))
        raise ValueError(f"unknown op {op!r}")

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Plain values at ``points`` of shape ``(n, D)``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = self.at(Jet.variable(points, 0))
        if isinstance(out, Jet):
            return out.value
        return np.full(points.shape[0], float(out))

    def substitute(self, mapping: dict[int, "Expr"]) -> "Expr":
        """Replace coordinate slots (0-based keys) by expressions."""
        if self.op == "var":
            return mapping.get(self.index, self)
        if not self.args:
            return self
        new_args = tuple(a.substitute(mapping) for a in self.args)
        if self.op == "pow":
            return Expr("pow", new_args)
        return Expr(self.op, new_args, self.value, self.index)


ExprLike = Union[Expr, float, int]


def _mul(a, b):
    if isinstance(a, Jet) and isinstance(b, Jet):
        return a * b
    if isinstance(a, Jet):
        return a.scale(float(b))
    if isinstance(b, Jet):
        return b.scale(float(a))
    return a * b


def const(v: float) -> Expr:
    return Expr("const", value=float(v))


def var(i: int) -> Expr:
    """Coordinate x^i with the 1-based index used in text form."""
    if i < 1:
        raise ValueError("coordinates are numbered from 1")
    return Expr("var", index=i - 1)


ZERO = const(0.0)
ONE = const(1.0)


def lift(x: ExprLike) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, str):
        return parse(x)
    return const(float(x))


def add(*terms: ExprLike) -> Expr:
    flat: list[Expr] = []
    total = 0.0
    for t in map(lift, terms):
        parts = t.args if t.op == "+" else (t,)
        for p in parts:
            if p.is_const:
                total += p.value
            else:
                flat.append(p)
    if total != 0.0 or not flat:
        flat.append(const(total))
    return flat[0] if len(flat) == 1 else Expr("+", tuple(flat))


def mul(*factors: ExprLike) -> Expr:
    flat: list[Expr] = []
    coef = 1.0
    for f in map(lift, factors):
        parts = f.args if f.op == "*" else (f,)
        for p in parts:
            if p.is_const:
                coef *= p.value
            else:
                flat.append(p)
    if coef == 0.0:
        return ZERO
    if coef != 1.0 or not flat:
        flat.insert(0, const(coef))
    return flat[0] if len(flat) == 1 else Expr("*", tuple(flat))


def neg(a: ExprLike) -> Expr:
    a = lift(a)
    if a.is_const:
        return const(-a.value)
    return Expr("neg", (a,))


def sub(a: ExprLike, b: ExprLike) -> Expr:
    a, b = lift(a), lift(b)
    if b.is_const and b.value == 0.0:
        return a
    if a.is_const and b.is_const:
        return const(a.value - b.value)
    return Expr("-", (a, b))


def div(a: ExprLike, b: ExprLike) -> Expr:
    a, b = lift(a), lift(b)
    if b.is_const:
        if b.value == 0.0:
            raise ZeroDivisionError("division by constant zero")
        return mul(a, 1.0 / b.value)
    return Expr("/", (a, b))


def power(a: ExprLike, exponent: float) -> Expr:
    a = lift(a)
    if exponent == 1:
        return a
    if exponent == 0:
        return ONE
    if a.is_const:
        return const(a.value ** exponent)
    return Expr("pow", (a, const(exponent)))


def _unary(name: str):
    def build(a: ExprLike) -> Expr:
        a = lift(a)
        if a.is_const:
            return const(float(getattr(np, name)(a.value)))
        return Expr(name, (a,))

    build.__name__ = name
    return build


sin = _unary("sin")
cos = _unary("cos")
exp = _unary("exp")
log = _unary("log")
sqrt = _unary("sqrt")


# -- text form -------------------------------------------------------------
def _fmt(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def to_sexpr(e: Expr) -> str:
    if e.op == "const":
        return _fmt(e.value)
    if e.op == "var":
        return f"x{e.index + 1}"
    name = "-" if e.op == "neg" else e.op
    return "(" + " ".join([name] + [to_sexpr(a) for a in e.args]) + ")"


def parse(text: str) -> Expr:
    """Parse prefix s-expression text into an :class:`Expr`."""
    if isinstance(text, (int, float)):
        return const(text)
    tokens = [(m.group(), m.start()) for m in _TOKEN.finditer(text)]
    if not tokens:
        raise ExpressionSyntaxError("empty expression")
    pos = 0

    def atom(tok: str, at: int) -> Expr:
        m = _VAR.match(tok)
        if m:
            return var(int(m.group(1)))
        if tok in _NAMED:
            return const(_NAMED[tok])
        try:
            return const(float(tok))
        except ValueError:
            raise ExpressionSyntaxError(f"unknown atom {tok!r} at offset {at}") from None

    def node() -> Expr:
        nonlocal pos
        if pos >= len(tokens):
            raise ExpressionSyntaxError("unexpected end of expression")
        tok, at = tokens[pos]
        pos += 1
        if tok == ")":
            raise ExpressionSyntaxError(f"unexpected ')' at offset {at}")
        if tok != "(":
            return atom(tok, at)
        if pos >= len(tokens):
            raise ExpressionSyntaxError("unexpected end after '('")
        head, hat = tokens[pos]
        pos += 1
        args = []
        while pos < len(tokens) and tokens[pos][0] != ")":
            args.append(node())
        if pos >= len(tokens):
            raise ExpressionSyntaxError(f"unclosed '(' at offset {hat - 1}")
        pos += 1
        return _build(head, args, hat)

    result = node()
    if pos != len(tokens):
        raise ExpressionSyntaxError(f"trailing input at offset {tokens[pos][1]}")
    return result


def _build(head: str, args: list[Expr], at: int) -> Expr:
    def need(n: int) -> None:
        if len(args) != n:
            raise ExpressionSyntaxError(f"{head!r} at offset {at} takes {n} argument(s), got {len(args)}")

    if head == "+":
        if not args:
            raise ExpressionSyntaxError(f"'+' at offset {at} needs arguments")
        return Expr("+", tuple(args)) if len(args) > 1 else args[0]
    if head == "*":
        if not args:
            raise ExpressionSyntaxError(f"'*' at offset {at} needs arguments")
        return Expr("*", tuple(args)) if len(args) > 1 else args[0]
    if head == "-":
        if len(args) == 1:
            return Expr("neg", (args[0],))
        need(2)
        return Expr("-", tuple(args))
    if head == "/":
        need(2)
        return Expr("/", tuple(args))
    if head in ("pow", "^"):
        need(2)
        if not args[1].is_const:
            raise ExpressionSyntaxError(f"exponent at offset {at} must be a constant")
        return Expr("pow", tuple(args))
    if head in _UNARY and head != "neg":
        need(1)
        return Expr(head, tuple(args))
    raise ExpressionSyntaxError(f"unknown operator {head!r} at offset {at}")


def diff(e: Expr, i: int) -> Expr:
    """Symbolic partial derivative with respect to the 0-based slot ``i``.

    Used to build exact Jacobians of coordinate maps; the result is folded
    only lightly.
    """
    op = e.op
    if op == "const":
        return ZERO
    if op == "var":
        return ONE if e.index == i else ZERO
    a = e.args
    if op == "+":
        return add(*(diff(t, i) for t in a))
    if op == "*":
        terms = []
        for k in range(len(a)):
            dk = diff(a[k], i)
            if dk.is_const and dk.value == 0.0:
                continue
            terms.append(mul(*(a[:k] + (dk,) + a[k + 1:])))
        return add(*terms) if terms else ZERO
    if op == "-":
        return sub(diff(a[0], i), diff(a[1], i))
    if op == "neg":
        return neg(diff(a[0], i))
    if op == "/":
        num, den = a
        return sub(div(diff(num, i), den), div(mul(num, diff(den, i)), power(den, 2)))
    if op == "pow":
        n = a[1].value
        return mul(n, power(a[0], n - 1), diff(a[0], i))
    inner = diff(a[0], i)
    if inner.is_const and inner.value == 0.0:
        return ZERO
    outer = {
        "sin": lambda u: cos(u),
        "cos": lambda u: neg(sin(u)),
        "exp": lambda u: exp(u),
        "log": lambda u: div(ONE, u),
        "sqrt": lambda u: div(0.5, sqrt(u)),
    }[op](a[0])
    return mul(outer, inner)
