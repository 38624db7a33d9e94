"""Parsing and evaluation of the scalar functions that define a problem.

The grammar is a closed whitelist of smooth primitives (whitespace is
ignored)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?            # right associative
    atom   := NUMBER | 'pi' | 'x' | 'y'
            | ('sin' | 'cos' | 'exp' | 'sqrt' | 'ln') '(' expr ')'
            | '(' expr ')'

Exponents must be constant (integer or real); they are folded at parse time.
Absolute value and comparisons are deliberately absent: evaluated functions
must be smooth wherever the solver touches them.  Parsed expressions are
immutable and evaluation is pure, over plain numbers, numpy arrays, or jets.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from numbers import Real

import numpy as np

from . import jets
from .jets import DomainError, Jet2

__all__ = [
    "Expr",
    "parse",
    "eval_scalar",
    "eval_jet2",
    "to_text",
    "ExpressionSyntaxError",
    "UnknownIdentifier",
    "DomainError",
]

FUNCTIONS = ("sin", "cos", "exp", "sqrt", "ln")


class ExpressionSyntaxError(SyntaxError):
    """Malformed expression text; `position` is the 0-based offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownIdentifier(ExpressionSyntaxError):
    """An identifier outside the closed set of variables and functions."""


@dataclass(frozen=True, slots=True)
class Expr:
    pass


@dataclass(frozen=True, slots=True)
class Num(Expr):
    value: float


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str  # 'x' or 'y'


@dataclass(frozen=True, slots=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True, slots=True)
class Bin(Expr):
    op: str  # '+', '-', '*', '/'
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class Pow(Expr):
    base: Expr
    exponent: float


@dataclass(frozen=True, slots=True)
class Call(Expr):
    fn: str
    arg: Expr


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.lastgroup is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            raise ExpressionSyntaxError(
                f"unexpected character {stripped[0]!r}", len(text) - len(stripped)
            )
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, value: str):
        kind, text, at = self.peek()
        if kind != "op" or text != value:
            raise ExpressionSyntaxError(f"expected {value!r}", at)
        return self.advance()

    def parse(self) -> Expr:
        node = self.expr()
        kind, text, at = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected {text!r}", at)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                node = Bin(text, node, self.term())
            else:
                return node

    def term(self) -> Expr:
        node = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                node = Bin(text, node, self.unary())
            else:
                return node

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, text, at = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            exponent = self.unary()
            folded = _fold_constant(exponent)
            if folded is None:
                raise ExpressionSyntaxError("exponent must be constant", at)
            return Pow(base, folded)
        return base

    def atom(self) -> Expr:
        kind, text, at = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            if text in ("x", "y"):
                return Var(text)
            if text == "pi":
                return Num(math.pi)
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            raise UnknownIdentifier(f"unknown identifier {text!r}", at)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExpressionSyntaxError(
            f"unexpected {text!r}" if text else "unexpected end of input", at
        )


def _fold_constant(node: Expr) -> float | None:
    try:
        return _eval(node, None, None)
    except TypeError:
        return None  # contains a variable


def parse(text: str) -> Expr:
    """Parse expression text to an immutable AST."""
    if not text or not text.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    return _Parser(text).parse()


_SCALAR_FN = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "sqrt": math.sqrt,
    "ln": math.log,
}

_ARRAY_FN = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "ln": np.log,
}

_JET_FN = {
    "sin": jets.sin,
    "cos": jets.cos,
    "exp": jets.exp,
    "sqrt": jets.sqrt,
    "ln": jets.log,
}


def _apply(fn: str, v):
    if isinstance(v, (jets.Jet1, Jet2)):
        return _JET_FN[fn](v)
    if isinstance(v, np.ndarray):
        return _ARRAY_FN[fn](v)
    return _SCALAR_FN[fn](float(v))


def _power(base, exponent: float):
    if isinstance(base, (jets.Jet1, Jet2)):
        return base ** exponent
    if float(exponent).is_integer():
        n = int(exponent)
        if isinstance(base, np.ndarray):
            if n < 0 and np.any(base == 0.0):
                raise ZeroDivisionError("zero raised to a negative power")
            return np.power(base, float(n))
        if n < 0 and base == 0.0:
            raise ZeroDivisionError("zero raised to a negative power")
        return float(base) ** n
    if isinstance(base, np.ndarray):
        if np.any(base < 0.0):
            raise DomainError("real power of a negative base")
        return np.power(base, exponent)
    if base < 0.0:
        raise DomainError("real power of a negative base")
    return math.pow(float(base), exponent)


def _eval(node: Expr, x, y):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        v = x if node.name == "x" else y
        if v is None:
            raise TypeError("free variable in constant context")
        return v
    if isinstance(node, Neg):
        return -_eval(node.arg, x, y)
    if isinstance(node, Bin):
        a = _eval(node.left, x, y)
        b = _eval(node.right, x, y)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if isinstance(b, (Real, np.ndarray)) and np.any(np.asarray(b) == 0.0):
            raise ZeroDivisionError("division by zero")
        return a / b
    if isinstance(node, Pow):
        return _power(_eval(node.base, x, y), node.exponent)
    if isinstance(node, Call):
        return _apply(node.fn, _eval(node.arg, x, y))
    raise TypeError(f"unknown node {node!r}")


def eval_scalar(e: Expr, x, y):
    """Evaluate over numbers (or numpy arrays, elementwise)."""
    try:
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            return _eval(e, x, y)
    except (ZeroDivisionError, FloatingPointError, ValueError, OverflowError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(str(exc)) from exc


def eval_jet2(e: Expr, x: Jet2, y: Jet2) -> Jet2:
    """Evaluate over jet arithmetic; the result's partials are the true ones.

    Constant expressions still return a jet (broadcast against the seeds).
    """
    if x.degree != y.degree:
        raise ValueError("seed jets must share a degree")
    v = _eval(e, x, y)
    if isinstance(v, Jet2):
        return v
    return (x * 0.0) + v


def to_text(e: Expr) -> str:
    """Canonically parenthesized text; parse(to_text(e)) == e."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_text(e.arg)})"
    if isinstance(e, Bin):
        return f"({to_text(e.left)} {e.op} {to_text(e.right)})"
    if isinstance(e, Pow):
        return f"{to_text(e.base)}^({repr(e.exponent)})"
    if isinstance(e, Call):
        return f"{e.fn}({to_text(e.arg)})"
    raise TypeError(f"unknown node {e!r}")


def free_variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Neg):
        return free_variables(e.arg)
    if isinstance(e, Bin):
        return free_variables(e.left) | free_variables(e.right)
    if isinstance(e, Pow):
        return free_variables(e.base)
    if isinstance(e, Call):
        return free_variables(e.arg)
    return set()
