"""Expression language for game coefficients.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := power (('*' | '/') power)*
    power   := unary ('^' power)?          # right associative
    unary   := ('-' | '+') unary | primary
    primary := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'

Unary minus binds tighter than ``^``, so ``-2^2`` is ``(-2)^2 = 4``.
Functions: abs, tanh, exp, sin, cos (one argument), min, max, pow (two).

Evaluation accepts floats or numpy arrays in the environment and
broadcasts; scalar environments give a Python float back.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import SpecError


class DSLError(SpecError):
    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class EvalError(SpecError):
    pass


# ---------------------------------------------------------------- tokens

@dataclass(frozen=True)
class Token:
    kind: str  # num, ident, op, lparen, rparen, comma, end
    value: Union[str, float]
    pos: int  # 1-based character position

    def __repr__(self):
        return f"{self.kind}({self.value!r})"


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^])
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<comma>,)
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> list[Token]:
    if not text or not text.strip():
        raise DSLError("empty expression", 1)
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise DSLError(f"illegal character {text[pos]!r}", pos + 1)
        kind = m.lastgroup
        raw = m.group()
        if kind == "num":
            value = float(raw)
            if not math.isfinite(value):
                raise DSLError(f"numeric literal {raw!r} overflows", pos + 1)
            tokens.append(Token("num", value, pos + 1))
        elif kind != "ws":
            tokens.append(Token(kind, raw, pos + 1))
        pos = m.end()
    tokens.append(Token("end", "", len(text) + 1))
    return tokens


# ---------------------------------------------------------------- AST

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Expr = Union[Num, Var, Neg, BinOp, Call]

UNARY_FUNCS = {
    "abs": np.abs,
    "tanh": np.tanh,
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
}
BINARY_FUNCS = {
    "min": np.minimum,
    "max": np.maximum,
    "pow": np.power,
}


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind):
        tok = self.tok
        if tok.kind != kind:
            shown = tok.value if tok.kind != "end" else "end of input"
            raise DSLError(f"expected {kind}, got {shown!r}", tok.pos)
        return self.advance()

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            raise DSLError(f"unexpected token {self.tok.value!r}", self.tok.pos)
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.value in "+-":
            op = self.advance().value
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.power()
        while self.tok.kind == "op" and self.tok.value in "*/":
            op = self.advance().value
            node = BinOp(op, node, self.power())
        return node

    def power(self):
        base = self.unary()
        if self.tok.kind == "op" and self.tok.value == "^":
            self.advance()
            return BinOp("^", base, self.power())
        return base

    def unary(self):
        if self.tok.kind == "op" and self.tok.value == "-":
            self.advance()
            return Neg(self.unary())
        if self.tok.kind == "op" and self.tok.value == "+":
            self.advance()
            return self.unary()
        return self.primary()

    def primary(self):
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Num(tok.value)
        if tok.kind == "lparen":
            self.advance()
            if self.tok.kind == "end":
                raise DSLError("unclosed parenthesis", tok.pos)
            node = self.expr()
            if self.tok.kind == "end":
                raise DSLError("unclosed parenthesis", tok.pos)
            self.expect("rparen")
            return node
        if tok.kind == "ident":
            self.advance()
            if self.tok.kind != "lparen":
                if tok.value in UNARY_FUNCS or tok.value in BINARY_FUNCS:
                    raise DSLError(f"function {tok.value!r} needs arguments", tok.pos)
                return Var(tok.value)
            self.advance()
            args = [self.expr()]
            while self.tok.kind == "comma":
                self.advance()
                args.append(self.expr())
            self.expect("rparen")
            return _make_call(tok, args)
        shown = tok.value if tok.kind != "end" else "end of input"
        raise DSLError(f"unexpected token {shown!r}", tok.pos)


def _make_call(tok, args):
    name = tok.value
    if name in UNARY_FUNCS:
        arity = 1
    elif name in BINARY_FUNCS:
        arity = 2
    else:
        raise DSLError(f"unknown function {name!r}", tok.pos)
    if len(args) != arity:
        raise DSLError(
            f"function {name!r} takes {arity} argument(s), got {len(args)}", tok.pos
        )
    return Call(name, tuple(args))


def parse(tokens) -> Expr:
    if isinstance(tokens, str):
        tokens = tokenize(tokens)
    return _Parser(list(tokens)).parse()


def parse_expr(text: str) -> Expr:
    return parse(tokenize(text))


def to_source(node: Expr) -> str:
    """Fully parenthesized source that reparses to an equal tree."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


def variables(node: Expr) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return variables(node.operand)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    return set().union(*(variables(a) for a in node.args))


# ---------------------------------------------------------------- evaluation

def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise EvalError(f"unbound variable {node.name!r}") from None
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, BinOp):
        left = _eval(node.left, env)
        right = _eval(node.right, env)
        op = node.op
        if op == "+":
            return left + right
        if op == "-":
            return left - right
        if op == "*":
            return left * right
        if op == "/":
            if np.any(np.asarray(right) == 0):
                raise EvalError("division by zero")
            return left / right
        with np.errstate(all="ignore"):
            return np.power(left, right)
    if isinstance(node, Call):
        args = [_eval(a, env) for a in node.args]
        fn = UNARY_FUNCS.get(node.name) or BINARY_FUNCS[node.name]
        with np.errstate(all="ignore"):
            return fn(*args)
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(node: Expr, env: Mapping[str, object]):
    """Evaluate with double-precision semantics.

    Raises EvalError on unbound variables, division by zero, or a
    non-finite result.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        value = _eval(node, env)
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise EvalError("expression evaluated to a non-finite value")
    if arr.ndim == 0:
        return float(arr)
    return arr
