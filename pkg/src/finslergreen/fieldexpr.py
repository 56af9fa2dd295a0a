"""Scalar field expressions over R^d with exact first and second derivatives.

Expressions use the variables ``x1 .. xd``, numeric literals, the constant
``pi``, the operators ``+ - * /`` (plus unary minus) and the functions
``sin cos exp cosh sinh sqrt log``.  Derivatives are propagated in forward
mode with dense second-order jets, so gradients and Hessians are exact up
to rounding.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np


class FieldSyntaxError(ValueError):
    """Malformed expression text; ``pos`` is the 0-based character offset."""

    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class FieldDomainError(ArithmeticError):
    """Evaluation left the domain of an operation (division by zero, log of x <= 0, ...)."""


FUNCTIONS = ("sin", "cos", "exp", "cosh", "sinh", "sqrt", "log")


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 0-based


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Call]


@dataclass(frozen=True)
class Field:
    """A parsed expression bound to an ambient dimension."""

    root: Node
    dim: int
    text: str = ""

    def __call__(self, x) -> float:
        return float(evaluate(self, np.asarray(x, dtype=float)))

    def eval2(self, x) -> "FieldEval":
        return eval2(self, x)

    def is_constant(self) -> bool:
        return not _free_vars(self.root)

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True)
class FieldEval:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise FieldSyntaxError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    # expr   := term (('+'|'-') term)*
    # term   := unary (('*'|'/') unary)*
    # unary  := ('-'|'+') unary | atom
    # atom   := number | name | name '(' expr ')' | '(' expr ')'

    def __init__(self, text: str, dim: int):
        self.tokens = _tokenize(text)
        self.i = 0
        self.dim = dim

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise FieldSyntaxError(f"expected {value!r}, found {found}", pos)

    def parse(self) -> Node:
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise FieldSyntaxError(f"unexpected token {val!r}", pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.atom()

    def atom(self) -> Node:
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            if val == "pi":
                return Num(math.pi)
            m = re.fullmatch(r"x(\d+)", val)
            if m:
                k = int(m.group(1))
                if k < 1 or k > self.dim:
                    raise FieldSyntaxError(
                        f"variable {val} out of range for dimension {self.dim}", pos
                    )
                return Var(k - 1)
            raise FieldSyntaxError(f"unknown identifier {val!r}", pos)
        if kind == "end":
            raise FieldSyntaxError("unexpected end of input", pos)
        raise FieldSyntaxError(f"unexpected token {val!r}", pos)


def parse(text: str, dim: int) -> Field:
    """Parse ``text`` into a :class:`Field` over R^dim."""
    if dim < 1:
        raise ValueError("dimension must be positive")
    return Field(_Parser(text, dim).parse(), dim, text)


def constant(value: float, dim: int) -> Field:
    return Field(Num(float(value)), dim, repr(float(value)))


def _free_vars(node: Node) -> set[int]:
    if isinstance(node, Var):
        return {node.index}
    if isinstance(node, Num):
        return set()
    if isinstance(node, (Neg, Call)):
        return _free_vars(node.arg)
    return _free_vars(node.left) | _free_vars(node.right)


def free_variables(field: Field) -> set[int]:
    """0-based indices of the variables that occur in ``field``."""
    return _free_vars(field.root)


# --------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _fmt(node: Node, parent: int = 0, right: bool = False) -> str:
    if isinstance(node, Num):
        s = repr(node.value)
        return f"({s})" if node.value < 0 else s
    if isinstance(node, Var):
        return f"x{node.index + 1}"
    if isinstance(node, Call):
        return f"{node.func}({_fmt(node.arg)})"
    if isinstance(node, Neg):
        s = "-" + _fmt(node.arg, 3)
        return f"({s})" if parent > 0 else s
    prec = _PREC[node.op]
    s = f"{_fmt(node.left, prec)} {node.op} {_fmt(node.right, prec, True)}"
    # left-associative operators need parens on an equal-precedence right operand
    if prec < parent or (right and prec == parent):
        return f"({s})"
    return s


def to_text(field: Field) -> str:
    """Render an expression that parses back to an equivalent tree."""
    return _fmt(field.root)


# --------------------------------------------------------------------------
# value evaluation, vectorized over points


def _eval_value(node: Node, x: np.ndarray):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return x[..., node.index]
    if isinstance(node, Neg):
        return -_eval_value(node.arg, x)
    if isinstance(node, BinOp):
        a = _eval_value(node.left, x)
        b = _eval_value(node.right, x)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if np.any(np.asarray(b) == 0.0):
            raise FieldDomainError("division by zero")
        return a / b
    u = _eval_value(node.arg, x)
    f = node.func
    if f == "log" and np.any(np.asarray(u) <= 0.0):
        raise FieldDomainError("log of a non-positive number")
    if f == "sqrt" and np.any(np.asarray(u) < 0.0):
        raise FieldDomainError("sqrt of a negative number")
    return getattr(np, f)(u)


def evaluate(field: Field, x) -> np.ndarray:
    """Field values at points ``x`` of shape (..., d); returns shape (...)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != field.dim:
        raise ValueError(f"expected points with trailing dimension {field.dim}")
    out = _eval_value(field.root, x)
    return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()


# --------------------------------------------------------------------------
# second-order forward mode


def _unary_jet(f0, f1, f2, g, H):
    return f0, f1 * g, f2 * np.outer(g, g) + f1 * H


def _jet(node: Node, x: np.ndarray, d: int):
    if isinstance(node, Num):
        return node.value, np.zeros(d), np.zeros((d, d))
    if isinstance(node, Var):
        g = np.zeros(d)
        g[node.index] = 1.0
        return x[node.index], g, np.zeros((d, d))
    if isinstance(node, Neg):
        v, g, H = _jet(node.arg, x, d)
        return -v, -g, -H
    if isinstance(node, BinOp):
        a, ga, Ha = _jet(node.left, x, d)
        b, gb, Hb = _jet(node.right, x, d)
        if node.op == "+":
            return a + b, ga + gb, Ha + Hb
        if node.op == "-":
            return a - b, ga - gb, Ha - Hb
        if node.op == "/":
            if b == 0.0:
                raise FieldDomainError("division by zero")
            b, gb, Hb = _unary_jet(1.0 / b, -1.0 / b**2, 2.0 / b**3, gb, Hb)
        cross = np.outer(ga, gb)
        return a * b, a * gb + b * ga, a * Hb + b * Ha + (cross + cross.T)
    u, g, H = _jet(node.arg, x, d)
    f = node.func
    if f == "sin":
        s, c = math.sin(u), math.cos(u)
        return _unary_jet(s, c, -s, g, H)
    if f == "cos":
        s, c = math.sin(u), math.cos(u)
        return _unary_jet(c, -s, -c, g, H)
    if f == "exp":
        e = math.exp(u)
        return _unary_jet(e, e, e, g, H)
    if f == "cosh":
        ch, sh = math.cosh(u), math.sinh(u)
        return _unary_jet(ch, sh, ch, g, H)
    if f == "sinh":
        ch, sh = math.cosh(u), math.sinh(u)
        return _unary_jet(sh, ch, sh, g, H)
    if f == "sqrt":
        if u <= 0.0:
            raise FieldDomainError("sqrt is not differentiable at non-positive arguments")
        r = math.sqrt(u)
        return _unary_jet(r, 0.5 / r, -0.25 / (r * u), g, H)
    if u <= 0.0:
        raise FieldDomainError("log of a non-positive number")
    return _unary_jet(math.log(u), 1.0 / u, -1.0 / u**2, g, H)


def eval2(field: Field, x) -> FieldEval:
    """Value, gradient and Hessian of ``field`` at the point ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (field.dim,):
        raise ValueError(f"expected a point of shape ({field.dim},)")
    if not np.all(np.isfinite(x)):
        raise FieldDomainError("non-finite evaluation point")
    v, g, H = _jet(field.root, x, field.dim)
    g = np.asarray(g, dtype=float) + np.zeros(field.dim)
    H = np.asarray(H, dtype=float) + np.zeros((field.dim, field.dim))
    return FieldEval(float(v), g, H)


def _jet1(node: Node, x: np.ndarray, d: int):
    if isinstance(node, Num):
        return node.value, 0.0
    if isinstance(node, Var):
        g = np.zeros(d)
        g[node.index] = 1.0
        return x[node.index], g
    if isinstance(node, Neg):
        v, g = _jet1(node.arg, x, d)
        return -v, -g
    if isinstance(node, BinOp):
        a, ga = _jet1(node.left, x, d)
        b, gb = _jet1(node.right, x, d)
        if node.op == "+":
            return a + b, ga + gb
        if node.op == "-":
            return a - b, ga - gb
        if node.op == "*":
            return a * b, a * gb + b * ga
        if b == 0.0:
            raise FieldDomainError("division by zero")
        return a / b, (ga * b - a * gb) / (b * b)
    u, g = _jet1(node.arg, x, d)
    f = node.func
    if f == "sin":
        return math.sin(u), math.cos(u) * g
    if f == "cos":
        return math.cos(u), -math.sin(u) * g
    if f == "exp":
        e = math.exp(u)
        return e, e * g
    if f == "cosh":
        return math.cosh(u), math.sinh(u) * g
    if f == "sinh":
        return math.sinh(u), math.cosh(u) * g
    if f == "sqrt":
        if u <= 0.0:
            raise FieldDomainError("sqrt is not differentiable at non-positive arguments")
        r = math.sqrt(u)
        return r, (0.5 / r) * g
    if u <= 0.0:
        raise FieldDomainError("log of a non-positive number")
    return math.log(u), g / u


def eval1(field: Field, x) -> tuple[float, np.ndarray]:
    """Value and gradient only; cheaper than :func:`eval2` inside ODE right-hand sides."""
    x = np.asarray(x, dtype=float)
    v, g = _jet1(field.root, x, field.dim)
    return float(v), np.zeros(field.dim) + g
