"""Expression DSL producing scalar fields with forward-mode derivatives.

Grammar (whitespace insignificant, function application requires parens)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := ('-')? power
    power  := atom ('^' factor)?
    atom   := number | ident | ident '(' expr ')' | '(' expr ')'

``^`` binds tighter than unary minus, which binds tighter than ``*``/``/``,
which bind tighter than ``+``/``-``; ``^`` is right-associative.  Variables
are ``x1..xn`` with aliases ``x, y, z, t`` when the arity is at most 4;
``pi`` is the only constant.  Partial derivatives are obtained by evaluating
the AST over dual numbers with one active variable per call; there is no
symbolic differentiation and no second-derivative API.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numkit as nk
from .numkit import Dual, EvalDomainError

__all__ = [
    "ExprSyntaxError", "UnknownIdentifier", "ArityExceeded",
    "Expr", "Num", "Var", "Neg", "Bin", "Call",
    "parse", "to_field", "parse_field", "ScalarField", "CallableField",
    "ConstantField", "pretty",
]


class ExprSyntaxError(nk.ValidationError):
    """Malformed expression text; ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (offset {offset})")


class UnknownIdentifier(ExprSyntaxError):
    pass


class ArityExceeded(ExprSyntaxError):
    pass


_FUNCTIONS = {
    "sin": nk.sin, "cos": nk.cos, "tan": nk.tan, "exp": nk.exp,
    "log": nk.log, "sqrt": nk.sqrt, "tanh": nk.tanh, "atan": nk.atan,
    "abs": nk.absolute,
}
_ALIASES = {"x": 1, "y": 2, "z": 3, "t": 4}


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class Bin:
    op: str
    lhs: "Node"
    rhs: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    arg: "Node"


Node = Num | Var | Neg | Bin | Call


@dataclass(frozen=True)
class Expr:
    """Parsed expression with its arity fixed at parse time."""

    root: Node
    arity: int

    def __call__(self, point):
        return _eval(self.root, point)


# ---------------------------------------------------------------------------
# tokenizer

def _tokenize(text: str):
    toks = []  # (kind, value, offset)
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            try:
                val = float(text[i:j])
            except ValueError:
                raise ExprSyntaxError(f"bad number {text[i:j]!r}", i) from None
            toks.append(("num", val, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(("ident", text[i:j], i))
            i = j
            continue
        if c in "+-*/^()":
            toks.append((c, c, i))
            i += 1
            continue
        raise ExprSyntaxError(f"unexpected character {c!r}", i)
    toks.append(("end", None, n))
    return toks


# ---------------------------------------------------------------------------
# parser (precedence climbing over the binary levels, one-token lookahead)

class _Parser:
    _BIN_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}

    def __init__(self, toks, arity):
        self.toks = toks
        self.pos = 0
        self.arity = arity

    def peek(self):
        return self.toks[self.pos]

    def advance(self):
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind):
        tok = self.advance()
        if tok[0] != kind:
            raise ExprSyntaxError(f"expected {kind!r}, found {tok[1]!r}", tok[2])
        return tok

    def parse_expr(self, min_prec=1):
        lhs = self.parse_factor()
        while True:
            kind, _, _ = self.peek()
            prec = self._BIN_PREC.get(kind)
            if prec is None or prec < min_prec:
                return lhs
            self.advance()
            rhs = self.parse_expr(prec + 1)
            lhs = Bin(kind, lhs, rhs)

    def parse_factor(self):
        if self.peek()[0] == "-":
            self.advance()
            return Neg(self.parse_power())
        return self.parse_power()

    def parse_power(self):
        base = self.parse_atom()
        if self.peek()[0] == "^":
            self.advance()
            return Bin("^", base, self.parse_factor())  # right-associative
        return base

    def parse_atom(self):
        kind, val, off = self.advance()
        if kind == "num":
            return Num(val)
        if kind == "(":
            inner = self.parse_expr()
            self.expect(")")
            return inner
        if kind == "ident":
            if self.peek()[0] == "(":
                if val not in _FUNCTIONS:
                    raise UnknownIdentifier(f"unknown function {val!r}", off)
                self.advance()
                arg = self.parse_expr()
                self.expect(")")
                return Call(val, arg)
            return self._variable(val, off)
        raise ExprSyntaxError(f"unexpected token {val!r}", off)

    def _variable(self, name, off):
        if name == "pi":
            return Num(math.pi)
        idx = None
        if name in _ALIASES and self.arity <= 4:
            idx = _ALIASES[name]
        elif name.startswith("x") and name[1:].isdigit():
            idx = int(name[1:])
            if idx == 0:
                raise UnknownIdentifier(f"variables are 1-based, got {name!r}", off)
        if idx is None:
            if name in _FUNCTIONS:
                raise ExprSyntaxError(
                    f"function {name!r} requires parentheses", off)
            raise UnknownIdentifier(f"unknown identifier {name!r}", off)
        if idx > self.arity:
            raise ArityExceeded(
                f"variable {name!r} exceeds arity {self.arity}", off)
        return Var(idx)


def parse(text: str, arity: int) -> Expr:
    """Parse ``text`` into an :class:`Expr` over variables x1..x<arity>."""
    if not isinstance(arity, int) or arity < 1:
        raise ValueError("arity must be a positive integer")
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    p = _Parser(_tokenize(text), arity)
    root = p.parse_expr()
    kind, val, off = p.peek()
    if kind != "end":
        raise ExprSyntaxError(f"trailing input {val!r}", off)
    return Expr(root, arity)


# ---------------------------------------------------------------------------
# evaluation

def _eval(node, point):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return point[node.index - 1]
    if isinstance(node, Neg):
        return -_eval(node.operand, point)
    if isinstance(node, Call):
        return _FUNCTIONS[node.name](_eval(node.arg, point))
    lhs = _eval(node.lhs, point)
    rhs = _eval(node.rhs, point)
    op = node.op
    if op == "+":
        return lhs + rhs
    if op == "-":
        return lhs - rhs
    if op == "*":
        return lhs * rhs
    if op == "/":
        if np.any(nk.primal(rhs) == 0.0):
            raise EvalDomainError("division", "zero denominator")
        return lhs / rhs
    if op == "^":
        return nk.power(lhs, rhs)
    raise AssertionError(op)


def pretty(expr: Expr) -> str:
    """Unparse; the result re-parses to an AST with identical evaluation."""
    return _unparse(expr.root, 0)


def _unparse(node, parent_prec):
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Neg):
        s = f"-{_unparse(node.operand, 3)}"
        return f"({s})" if parent_prec > 2 else s
    if isinstance(node, Call):
        return f"{node.name}({_unparse(node.arg, 0)})"
    prec = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}[node.op]
    lhs = _unparse(node.lhs, prec if node.op != "^" else prec + 1)
    rhs = _unparse(node.rhs, prec + 1 if node.op != "^" else prec)
    s = f"{lhs} {node.op} {rhs}" if node.op != "^" else f"{lhs}^{rhs}"
    return f"({s})" if prec < parent_prec else s


# ---------------------------------------------------------------------------
# scalar fields

class ScalarField:
    """Real-valued function on R^n with first partials via dual evaluation.

    ``eval`` and ``partial`` accept points whose components are floats,
    arrays, or duals; all evaluation is bit-reproducible for identical
    inputs.
    """

    def __init__(self, expr: Expr):
        self.expr = expr
        self.arity = expr.arity

    def eval(self, point):
        self._check(point)
        try:
            return self.expr(point)
        except EvalDomainError as err:
            raise EvalDomainError(err.op, "", _point_repr(point)) from None

    def partial(self, i: int, point):
        """d/dx_i at ``point`` (i is 1-based)."""
        if not 1 <= i <= self.arity:
            raise ValueError(f"partial index {i} outside 1..{self.arity}")
        self._check(point)
        lifted = tuple(Dual(c, 1.0 if j + 1 == i else 0.0)
                       for j, c in enumerate(point))
        try:
            out = self.expr(lifted)
        except EvalDomainError as err:
            raise EvalDomainError(err.op, "", _point_repr(point)) from None
        return out.deriv if isinstance(out, Dual) else np.zeros_like(nk.primal(point[i - 1]))

    def gradient(self, point):
        return tuple(self.partial(i, point) for i in range(1, self.arity + 1))

    def _check(self, point):
        if len(point) != self.arity:
            raise ValueError(
                f"point has {len(point)} coordinates, field arity is {self.arity}")


def _point_repr(point):
    vals = [np.asarray(nk.primal(c)).ravel() for c in point]
    return tuple(float(v[0]) if v.size else float("nan") for v in vals)


class CallableField:
    """ScalarField-compatible wrapper around a closed-form construction.

    ``fn`` must accept a tuple of generic scalars (floats/arrays/duals) so
    that partials can be taken by dual seeding, exactly like parsed
    expressions.
    """

    def __init__(self, fn, arity: int):
        self.fn = fn
        self.arity = arity

    def eval(self, point):
        return self.fn(point)

    def partial(self, i: int, point):
        if not 1 <= i <= self.arity:
            raise ValueError(f"partial index {i} outside 1..{self.arity}")
        lifted = tuple(Dual(c, 1.0 if j + 1 == i else 0.0)
                       for j, c in enumerate(point))
        out = self.fn(lifted)
        return out.deriv if isinstance(out, Dual) else np.zeros_like(nk.primal(point[i - 1]))

    def gradient(self, point):
        return tuple(self.partial(i, point) for i in range(1, self.arity + 1))


def ConstantField(c: float, arity: int) -> CallableField:
    return CallableField(lambda p, _c=float(c): _c + 0.0 * nk.primal(p[0]), arity)


def to_field(expr: Expr) -> ScalarField:
    """Wrap a parsed expression as a scalar field."""
    return ScalarField(expr)


def parse_field(text: str, arity: int) -> ScalarField:
    return to_field(parse(text, arity))
