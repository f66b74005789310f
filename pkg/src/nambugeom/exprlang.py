"""A small expression language for embedding coordinates, densities and metrics.

Grammar (whitespace insignificant, radians throughout)::

    expr   := expr ('+' | '-') expr | expr ('*' | '/') expr
            | '-' expr | expr '^' expr          # '^' binds tightest, right-assoc
            | NUMBER | PARAM | NAME | FUNC '(' expr ')' | '(' expr ')'
    PARAM  := 'u1' .. 'u9' | 'x1' .. 'x9'       # surface / ambient coordinates
    FUNC   := sin cos tan sinh cosh exp log sqrt

``-u1^2`` is ``-(u1^2)``; ``2^3^2`` is ``2^(3^2)``.  Any other bare name is a
named constant looked up at evaluation time (``pi`` is built in).  There is no
implicit multiplication.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

from .jets import Jet, JetError, apply_univariate

FUNCTIONS = ("sin", "cos", "tan", "sinh", "cosh", "exp", "log", "sqrt")
BUILTIN_CONSTANTS = {"pi": math.pi}


class ParseError(ValueError):
    def __init__(self, offset: int, message: str, expected: str | None = None):
        self.offset = offset
        self.message = message
        self.expected = expected
        hint = f" (expected {expected})" if expected else ""
        super().__init__(f"at offset {offset}: {message}{hint}")


class EvalError(ValueError):
    pass


# -- AST ----------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Param:
    prefix: str
    index: int  # 1-based, as written

    @property
    def name(self) -> str:
        return f"{self.prefix}{self.index}"


@dataclass(frozen=True)
class Const:
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
    fn: str
    arg: "Expr"


Expr = Union[Num, Param, Const, Neg, BinOp, Call]


# -- lexer --------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)

_PARAM = re.compile(r"([ux])([1-9])$")


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    offset: int  # byte offset


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    byte = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(byte, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), byte))
        byte += len(m.group().encode("utf-8"))
        pos = m.end()
    toks.append(_Tok("end", "", byte))
    return toks


# -- Pratt parser -------------------------------------------------------------

_INFIX = {"+": (10, 11), "-": (10, 11), "*": (20, 21), "/": (20, 21), "^": (31, 30)}
_PREFIX_NEG = 25


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str):
        t = self.next()
        if t.text != text:
            raise ParseError(t.offset, f"unexpected {_describe(t)}", repr(text))

    def expr(self, min_bp: int = 0) -> Expr:
        left = self.prefix()
        while True:
            t = self.peek()
            if t.kind != "op" or t.text not in _INFIX:
                break
            lbp, rbp = _INFIX[t.text]
            if lbp < min_bp:
                break
            self.next()
            left = BinOp(t.text, left, self.expr(rbp))
        return left

    def prefix(self) -> Expr:
        t = self.next()
        if t.kind == "num":
            return Num(float(t.text))
        if t.kind == "op" and t.text == "-":
            return Neg(self.expr(_PREFIX_NEG))
        if t.kind == "op" and t.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "name":
            if t.text in FUNCTIONS:
                nxt = self.peek()
                if nxt.text != "(":
                    raise ParseError(nxt.offset, f"function {t.text} needs an argument", "'('")
                self.next()
                arg = self.expr()
                self.expect(")")
                return Call(t.text, arg)
            pm = _PARAM.match(t.text)
            if pm:
                return Param(pm.group(1), int(pm.group(2)))
            if self.peek().text == "(":
                raise ParseError(t.offset, f"unknown function {t.text!r}")
            return Const(t.text)
        raise ParseError(t.offset, f"unexpected {_describe(t)}", "a number, name or '('")


def _describe(t: _Tok) -> str:
    return "end of input" if t.kind == "end" else repr(t.text)


def parse(text: str) -> Expr:
    p = _Parser(text)
    e = p.expr()
    t = p.peek()
    if t.kind != "end":
        raise ParseError(t.offset, f"unexpected {_describe(t)}", "an operator or end of input")
    return e


# -- printer ------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    return 5


def to_text(e: Expr) -> str:
    """Render with the minimal parentheses that reparse to the same tree."""
    if isinstance(e, Num):
        v = e.value
        return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)
    if isinstance(e, Param):
        return e.name
    if isinstance(e, Const):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({to_text(e.arg)})"
    if isinstance(e, Neg):
        s = to_text(e.arg)
        return f"-({s})" if _prec(e.arg) < 3 else f"-{s}"
    p = _PREC[e.op]
    ls, rs = to_text(e.left), to_text(e.right)
    if e.op == "^":
        if _prec(e.left) <= p:
            ls = f"({ls})"
        if _prec(e.right) < p:
            rs = f"({rs})"
    else:
        if _prec(e.left) < p:
            ls = f"({ls})"
        if _prec(e.right) <= p:
            rs = f"({rs})"
    return f"{ls}{e.op}{rs}"


# -- evaluation ---------------------------------------------------------------

def params_used(e: Expr) -> set[str]:
    if isinstance(e, Param):
        return {e.name}
    if isinstance(e, (Neg, Call)):
        return params_used(e.arg)
    if isinstance(e, BinOp):
        return params_used(e.left) | params_used(e.right)
    return set()


def consts_used(e: Expr) -> set[str]:
    if isinstance(e, Const):
        return {e.name}
    if isinstance(e, (Neg, Call)):
        return consts_used(e.arg)
    if isinstance(e, BinOp):
        return consts_used(e.left) | consts_used(e.right)
    return set()


def _int_literal(e: Expr) -> int | None:
    if isinstance(e, Num) and e.value.is_integer():
        return int(e.value)
    if isinstance(e, Neg) and isinstance(e.arg, Num) and e.arg.value.is_integer():
        return -int(e.arg.value)
    return None


def _lookup_const(name: str, constants: Mapping[str, float]) -> float:
    if name in constants:
        return float(constants[name])
    if name in BUILTIN_CONSTANTS:
        return BUILTIN_CONSTANTS[name]
    raise EvalError(f"unknown constant {name!r}")


def evaluate(e: Expr, env: Mapping[str, Jet], constants: Mapping[str, float] | None = None) -> Jet:
    """Evaluate to a jet; ``env`` maps parameter names (``u1``, ``x3``, ...) to jets."""
    constants = constants or {}
    proto = next(iter(env.values()))
    n_vars, order = proto.n_vars, proto.order

    def rec(e: Expr) -> Jet:
        if isinstance(e, Num):
            return Jet.constant(e.value, n_vars, order)
        if isinstance(e, Param):
            if e.name not in env:
                raise EvalError(f"parameter {e.name} is not bound")
            return env[e.name]
        if isinstance(e, Const):
            return Jet.constant(_lookup_const(e.name, constants), n_vars, order)
        if isinstance(e, Neg):
            return -rec(e.arg)
        if isinstance(e, Call):
            try:
                return apply_univariate(rec(e.arg), e.fn)
            except JetError as exc:
                raise EvalError(f"{e.fn}: {exc}") from exc
        a = rec(e.left)
        if e.op == "^":
            k = _int_literal(e.right)
            try:
                if k is not None:
                    return a.ipow(k)
                b = rec(e.right)
                if not params_used(e.right):
                    return apply_univariate(a, "pow", b.value)
                return apply_univariate(b * apply_univariate(a, "log"), "exp")
            except JetError as exc:
                raise EvalError(f"power: {exc}") from exc
        b = rec(e.right)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if b.value == 0:
            raise EvalError("division by zero")
        return a / b

    return rec(e)


_FLOAT_FN = {"sin": math.sin, "cos": math.cos, "tan": math.tan, "sinh": math.sinh,
             "cosh": math.cosh, "exp": math.exp, "log": math.log, "sqrt": math.sqrt}


def evaluate_float(e: Expr, values: Mapping[str, float], constants: Mapping[str, float] | None = None) -> float:
    """Plain floating evaluation (no derivatives)."""
    constants = constants or {}
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Param):
        if e.name not in values:
            raise EvalError(f"parameter {e.name} is not bound")
        return float(values[e.name])
    if isinstance(e, Const):
        return _lookup_const(e.name, constants)
    if isinstance(e, Neg):
        return -evaluate_float(e.arg, values, constants)
    if isinstance(e, Call):
        x = evaluate_float(e.arg, values, constants)
        try:
            return _FLOAT_FN[e.fn](x)
        except ValueError as exc:
            raise EvalError(f"{e.fn}: {exc}") from exc
    a = evaluate_float(e.left, values, constants)
    b = evaluate_float(e.right, values, constants)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        if b == 0:
            raise EvalError("division by zero")
        return a / b
    if _int_literal(e.right) is None and a <= 0:
        raise EvalError("non-integer power of non-positive value")
    return a ** b
