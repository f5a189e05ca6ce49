"""Arithmetic expressions for field definitions.

Grammar (whitespace is insignificant)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = "-" unary | power ;
    power   = primary [ "^" unary ] ;
    primary = number | variable | func "(" expr ")" | "(" expr ")" ;
    func    = "exp" | "log" | "sqrt" | "sin" | "cos" | "abs" ;
    variable = "x" digits | "y" digits | "s" ;
    number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
            | "." digits [ ("e" | "E") [ "+" | "-" ] digits ] ;

``^`` binds tighter than unary minus and is right associative, so
``-2^2 == -4`` and ``2^3^2 == 512``.  A power whose exponent is not an
integer literal requires a strictly positive base.

Evaluation accepts scalars or numpy arrays as bindings; domain violations
(log/sqrt of a negative number, division by zero, non-finite results) raise
:class:`EvalError` instead of producing NaN.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import EvalError, ExprVarError, ParseError

FUNCTIONS = ("exp", "log", "sqrt", "sin", "cos", "abs")
_VAR_RE = re.compile(r"^(x[1-9][0-9]*|y[1-9][0-9]*|s)$")
_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, BinOp, Call]


def is_variable_name(name: str) -> bool:
    return bool(_VAR_RE.match(name))


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = len(text) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[stripped]!r}", stripped)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op):
        kind, value, pos = self.peek()
        if kind != "op" or value != op:
            raise ParseError(f"expected {op!r}", pos)
        self.take()

    def parse(self):
        e = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing token {value!r}", pos)
        return e

    def expr(self):
        left = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            left = BinOp(op, left, self.term())
        return left

    def term(self):
        left = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            left = BinOp(op, left, self.unary())
        return left

    def unary(self):
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.primary()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def primary(self):
        kind, value, pos = self.take()
        if kind == "num":
            return Num(float(value))
        if kind == "name":
            if value in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(value, arg)
            if is_variable_name(value):
                return Var(value)
            raise ParseError(f"unknown identifier {value!r}", pos)
        if kind == "op" and value == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "end":
            raise ParseError("unexpected end of input", pos)
        raise ParseError(f"unexpected token {value!r}", pos)


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree."""
    return _Parser(text).parse()


def as_expr(e) -> Expr:
    if isinstance(e, str):
        return parse(e)
    if isinstance(e, (int, float)):
        return Num(float(e))
    return e


def free_vars(e: Expr) -> frozenset:
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Var):
        return frozenset([e.name])
    if isinstance(e, (Neg, Call)):
        return free_vars(e.arg)
    return free_vars(e.left) | free_vars(e.right)


def to_text(e: Expr) -> str:
    """Fully parenthesized rendering; ``parse(to_text(e)) == e``."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_text(e.arg)})"
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg)})"
    return f"({to_text(e.left)} {e.op} {to_text(e.right)})"


def _integer_literal(e: Expr):
    if isinstance(e, Num) and float(e.value).is_integer():
        return int(e.value)
    if isinstance(e, Neg) and isinstance(e.arg, Num) and float(e.arg.value).is_integer():
        return -int(e.arg.value)
    return None


def _first_bad(mask):
    mask = np.asarray(mask)
    if mask.ndim == 0:
        return None
    return np.unravel_index(int(np.argmax(mask)), mask.shape)


def _fail(message, mask):
    raise EvalError(message, _first_bad(mask))


def _eval(e, env):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, Neg):
        return -_eval(e.arg, env)
    if isinstance(e, Call):
        a = np.asarray(_eval(e.arg, env), dtype=float)
        if e.func == "log":
            bad = a <= 0
            if np.any(bad):
                _fail("log of non-positive argument", bad)
            return np.log(a)
        if e.func == "sqrt":
            bad = a < 0
            if np.any(bad):
                _fail("sqrt of negative argument", bad)
            return np.sqrt(a)
        return {"exp": np.exp, "sin": np.sin, "cos": np.cos, "abs": np.abs}[e.func](a)
    a = np.asarray(_eval(e.left, env), dtype=float)
    if e.op == "^":
        k = _integer_literal(e.right)
        if k is not None:
            if k < 0 and np.any(a == 0):
                _fail("zero raised to a negative power", a == 0)
            return np.power(a, float(k))
        b = np.asarray(_eval(e.right, env), dtype=float)
        bad = a <= 0
        if np.any(bad):
            _fail("non-integer power of non-positive base", np.broadcast_to(bad, np.broadcast(a, b).shape))
        return np.power(a, b)
    b = np.asarray(_eval(e.right, env), dtype=float)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    bad = b == 0
    if np.any(bad):
        _fail("division by zero", np.broadcast_to(bad, np.broadcast(a, b).shape))
    return a / b


def evaluate(e, bindings: Mapping[str, object]):
    """Evaluate ``e`` with scalar or array ``bindings``.

    Returns a float when every binding is scalar, otherwise an array of the
    broadcast shape.
    """
    e = as_expr(e)
    missing = free_vars(e) - set(bindings)
    if missing:
        raise ExprVarError(missing)
    with np.errstate(all="ignore"):
        out = np.asarray(_eval(e, bindings), dtype=float)
    bad = ~np.isfinite(out)
    if np.any(bad):
        _fail("non-finite value", bad)
    if out.ndim == 0:
        return float(out)
    return out
