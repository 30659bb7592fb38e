"""Small arithmetic expression language for user-supplied rates and data.

Grammar, loosest binding first::

    expr  := term (("+" | "-") term)*
    term  := power (("*" | "/") power)*
    power := unary ("^" power)?
    unary := "-" unary | atom
    atom  := number | name | name "(" expr ")" | "(" expr ")"

Unary minus binds tighter than ``^``: ``-2^2`` is ``(-2)^2 = 4``. Write
``-(2^2)`` for the other reading. ``^`` is right associative.

The names ``e`` and ``pi`` are constants unless listed among the allowed
variables. Functions: exp, log, sqrt, sin, cos, abs.

Evaluation follows IEEE semantics (division by zero gives inf or nan, a
negative base with a non-integer exponent gives nan). Inputs may be floats,
numpy arrays, or mpmath numbers; with mpmath inputs the whole expression,
literals included, is evaluated at the current mpmath precision.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import mpmath
import numpy as np

from .errors import (
    MissingBinding,
    NonFiniteResult,
    ParseError,
    UnknownFunction,
    UnknownVariable,
)

__all__ = [
    "Number",
    "Constant",
    "Variable",
    "Negate",
    "BinaryOp",
    "Call",
    "ExprAst",
    "ExprFunction",
    "parse",
    "evaluate",
    "to_text",
    "compile_function",
    "FUNCTIONS",
    "CONSTANTS",
]

FUNCTIONS = ("exp", "log", "sqrt", "sin", "cos", "abs")
CONSTANTS = ("e", "pi")


@dataclass(frozen=True)
class Number:
    text: str

    @property
    def value(self) -> float:
        return float(self.text)


@dataclass(frozen=True)
class Constant:
    name: str


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Negate:
    operand: "Node"


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Number, Constant, Variable, Negate, BinaryOp, Call]


@dataclass(frozen=True)
class ExprAst:
    """A parsed expression together with the variables it references."""

    root: Node
    variables: frozenset
    source: str = ""

    def __str__(self) -> str:
        return to_text(self)

    def __call__(self, **bindings):
        return evaluate(self, bindings)


# -- tokenizer --------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(
                f"unexpected character {text[pos]!r}", _byte_offset(text, pos), "token"
            )
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, m.group(), _byte_offset(text, pos)))
        pos = m.end()
    toks.append(_Tok("end", "", _byte_offset(text, len(text))))
    return toks


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


# -- parser -----------------------------------------------------------------


class _Parser:
    def __init__(self, text: str, allowed: frozenset):
        self.toks = _tokenize(text)
        self.i = 0
        self.allowed = allowed
        self.used = set()

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _fail(self, expected: str):
        tok = self.tok
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ParseError(f"expected {expected}, found {found}", tok.offset, expected)

    def _accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def parse(self) -> Node:
        root = self.expr()
        if self.tok.kind != "end":
            self._fail("operator or end of input")
        return root

    def expr(self) -> Node:
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            left = BinaryOp(op, left, self.term())
        return left

    def term(self) -> Node:
        left = self.power()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            left = BinaryOp(op, left, self.power())
        return left

    def power(self) -> Node:
        base = self.unary()
        if self._accept("^"):
            return BinaryOp("^", base, self.power())
        return base

    def unary(self) -> Node:
        if self._accept("-"):
            return Negate(self.unary())
        return self.atom()

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "number":
            if not math.isfinite(float(tok.text)):
                raise ParseError("numeric literal overflows", tok.offset, "finite number")
            self.i += 1
            return Number(tok.text)
        if tok.kind == "name":
            self.i += 1
            if self._accept("("):
                if tok.text not in FUNCTIONS:
                    raise UnknownFunction(
                        f"unknown function {tok.text!r}", tok.offset, "one of " + ", ".join(FUNCTIONS)
                    )
                arg = self.expr()
                if not self._accept(")"):
                    self._fail("')'")
                return Call(tok.text, arg)
            if tok.text in self.allowed:
                self.used.add(tok.text)
                return Variable(tok.text)
            if tok.text in CONSTANTS:
                return Constant(tok.text)
            raise UnknownVariable(
                f"unknown variable {tok.text!r}",
                tok.offset,
                "one of " + ", ".join(sorted(self.allowed)) if self.allowed else "no variables",
            )
        if self._accept("("):
            inner = self.expr()
            if not self._accept(")"):
                self._fail("')'")
            return inner
        self._fail("number, name or '('")


def parse(text: str, allowed_vars=()) -> ExprAst:
    """Parse ``text``; only names in ``allowed_vars`` may appear as variables."""
    if not text or not text.strip():
        raise ParseError("empty expression", 0, "expression")
    p = _Parser(text, frozenset(allowed_vars))
    root = p.parse()
    return ExprAst(root, frozenset(p.used), text)


# -- printing ---------------------------------------------------------------


def to_text(ast) -> str:
    """Fully parenthesised text that parses back to the same tree."""
    node = ast.root if isinstance(ast, ExprAst) else ast
    if isinstance(node, Number):
        return node.text
    if isinstance(node, (Constant, Variable)):
        return node.name
    if isinstance(node, Negate):
        return f"(-{to_text(node.operand)})"
    if isinstance(node, BinaryOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


# -- evaluation -------------------------------------------------------------


class _NumpyOps:
    funcs = {
        "exp": np.exp,
        "log": np.log,
        "sqrt": np.sqrt,
        "sin": np.sin,
        "cos": np.cos,
        "abs": np.abs,
    }
    consts = {"e": np.float64(math.e), "pi": np.float64(math.pi)}

    @staticmethod
    def number(node):
        return np.float64(node.text)

    @staticmethod
    def binary(op, a, b):
        if op == "+":
            return np.add(a, b)
        if op == "-":
            return np.subtract(a, b)
        if op == "*":
            return np.multiply(a, b)
        if op == "/":
            return np.divide(a, b)
        return np.power(a, b)


def _mp_clean(v):
    if isinstance(v, mpmath.mpc):
        return mpmath.mpf("nan") if v.imag != 0 else v.real
    return v


class _MpOps:
    funcs = {
        "exp": mpmath.exp,
        "log": lambda a: mpmath.log(a) if a != 0 else mpmath.ninf,
        "sqrt": mpmath.sqrt,
        "sin": mpmath.sin,
        "cos": mpmath.cos,
        "abs": abs,
    }

    @property
    def consts(self):
        return {"e": +mpmath.e, "pi": +mpmath.pi}

    @staticmethod
    def number(node):
        return mpmath.mpf(node.text)

    @staticmethod
    def binary(op, a, b):
        a, b = mpmath.mpf(a), mpmath.mpf(b)
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if b == 0:
                if a == 0 or mpmath.isnan(a):
                    return mpmath.mpf("nan")
                return mpmath.inf if a > 0 else mpmath.ninf
            return a / b
        if a < 0 and not mpmath.isint(b):
            return mpmath.mpf("nan")
        if a == 0 and b < 0:
            return mpmath.inf
        return mpmath.power(a, b)


_MP_TYPES = (mpmath.mpf, mpmath.mpc)


def _eval(node, env, ops):
    if isinstance(node, Number):
        return ops.number(node)
    if isinstance(node, Variable):
        return env[node.name]
    if isinstance(node, Constant):
        return ops.consts[node.name]
    if isinstance(node, Negate):
        return -_eval(node.operand, env, ops)
    if isinstance(node, BinaryOp):
        return ops.binary(node.op, _eval(node.left, env, ops), _eval(node.right, env, ops))
    if isinstance(node, Call):
        return _mp_clean(ops.funcs[node.func](_eval(node.arg, env, ops)))
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(ast: ExprAst, bindings: Mapping, checked: bool = False):
    """Evaluate ``ast`` with the given variable bindings.

    Returns a float for scalar inputs, an ndarray for array inputs and an
    mpmath number if any binding is one. With ``checked=True`` a NaN or Inf
    anywhere in the result raises :class:`NonFiniteResult`.
    """
    missing = [v for v in ast.variables if v not in bindings]
    if missing:
        raise MissingBinding(f"no value bound for {', '.join(sorted(missing))}")
    env = {name: bindings[name] for name in ast.variables}
    if any(isinstance(v, _MP_TYPES) for v in env.values()):
        out = _eval(ast.root, env, _MpOps())
        ok = mpmath.isfinite(out)
    else:
        with np.errstate(all="ignore"):
            out = _eval(ast.root, env, _NumpyOps)
        if np.ndim(out) == 0:
            out = float(out)
        ok = bool(np.all(np.isfinite(out)))
    if checked and not ok:
        raise NonFiniteResult(f"{to_text(ast)} is not finite for {_describe(env)}")
    return out


def _describe(env) -> str:
    parts = []
    for k, v in sorted(env.items()):
        parts.append(f"{k}={v}" if np.ndim(v) == 0 else f"{k}=<array>")
    return ", ".join(parts) or "no bindings"


@dataclass(frozen=True)
class ExprFunction:
    """Positional-argument callable backed by a parsed expression.

    Scalar results are broadcast against array arguments so that, e.g., a
    constant fertility rate still yields one value per node.
    """

    ast: ExprAst
    argnames: tuple

    def __call__(self, *args):
        if len(args) != len(self.argnames):
            raise TypeError(f"expected {len(self.argnames)} arguments, got {len(args)}")
        out = evaluate(self.ast, dict(zip(self.argnames, args)))
        shapes = [np.shape(a) for a in args if isinstance(a, np.ndarray)]
        if shapes and np.ndim(out) == 0:
            out = np.full(np.broadcast_shapes(*shapes), out)
        return out

    def uses(self, name: str) -> bool:
        return name in self.ast.variables

    def __str__(self) -> str:
        return self.ast.source or to_text(self.ast)


def compile_function(text: str, argnames) -> ExprFunction:
    argnames = tuple(argnames)
    return ExprFunction(parse(text, argnames), argnames)
