"""Scalar expressions in the single variable t: parsing, evaluation, derivatives.

Coefficients, the delay, and the history function are all given as text.
The history must supply exact derivatives up to third order, so
differentiation is symbolic; derivative trees are left unreduced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

_FUNCTIONS = ("sin", "cos", "exp")


class ExpressionSyntaxError(ValueError):
    """Parse failure, carrying the character offset of the offending token."""

    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} at offset {position}")
        self.position = position


class EvaluationError(ValueError):
    """Evaluation did not produce a finite real number."""


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    operand: "Expression"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Fun:
    name: str
    argument: "Expression"


Expression = Union[Const, Var, Neg, Bin, Fun]


@dataclass(frozen=True)
class _Token:
    kind: str  # num | ident | op | lparen | rparen | end
    text: str
    pos: int


def _tokenize(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            while j < n and (source[j].isdigit() or source[j] == "."):
                j += 1
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k].isdigit():
                    j = k
                    while j < n and source[j].isdigit():
                        j += 1
            text = source[i:j]
            try:
                float(text)
            except ValueError:
                raise ExpressionSyntaxError(f"malformed number '{text}'", i) from None
            tokens.append(_Token("num", text, i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(_Token("ident", source[i:j], i))
            i = j
            continue
        if ch in "+-*/^":
            tokens.append(_Token("op", ch, i))
            i += 1
            continue
        if ch == "(":
            tokens.append(_Token("lparen", ch, i))
            i += 1
            continue
        if ch == ")":
            tokens.append(_Token("rparen", ch, i))
            i += 1
            continue
        raise ExpressionSyntaxError(f"unexpected character '{ch}'", i)
    tokens.append(_Token("end", "", n))
    return tokens


def _contains_var(e: Expression) -> bool:
    if isinstance(e, Var):
        return True
    if isinstance(e, Const):
        return False
    if isinstance(e, Neg):
        return _contains_var(e.operand)
    if isinstance(e, Bin):
        return _contains_var(e.left) or _contains_var(e.right)
    return _contains_var(e.argument)


class _Parser:
    """Recursive descent; precedence ^ (right-assoc) > unary minus > * / > + -."""

    def __init__(self, tokens: list[_Token]) -> None:
        self.tokens = tokens
        self.idx = 0

    def peek(self) -> _Token:
        return self.tokens[self.idx]

    def advance(self) -> _Token:
        tok = self.tokens[self.idx]
        self.idx += 1
        return tok

    def parse(self) -> Expression:
        node = self.sum_()
        tok = self.peek()
        if tok.kind != "end":
            raise ExpressionSyntaxError("trailing tokens", tok.pos)
        return node

    def sum_(self) -> Expression:
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.advance().text
            node = Bin(op, node, self.term())
        return node

    def term(self) -> Expression:
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.advance().text
            node = Bin(op, node, self.unary())
        return node

    def unary(self) -> Expression:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.advance()
            exp_tok = self.peek()
            exponent = self.exponent()
            if _contains_var(exponent):
                raise ExpressionSyntaxError(
                    "exponent must be a constant expression", exp_tok.pos
                )
            return Bin("^", base, exponent)
        return base

    def exponent(self) -> Expression:
        # right-associative: t^2^3 == t^(2^3); a leading minus is allowed here
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            return Neg(self.exponent())
        return self.power()

    def atom(self) -> Expression:
        tok = self.advance()
        if tok.kind == "num":
            return Const(float(tok.text))
        if tok.kind == "ident":
            if tok.text == "t":
                return Var()
            if tok.text in _FUNCTIONS:
                open_tok = self.peek()
                if open_tok.kind != "lparen":
                    raise ExpressionSyntaxError(
                        f"'{tok.text}' requires a parenthesized argument", open_tok.pos
                    )
                self.advance()
                arg = self.sum_()
                close = self.peek()
                if close.kind != "rparen":
                    raise ExpressionSyntaxError("unbalanced parenthesis", close.pos)
                self.advance()
                return Fun(tok.text, arg)
            raise ExpressionSyntaxError(f"unknown identifier '{tok.text}'", tok.pos)
        if tok.kind == "lparen":
            node = self.sum_()
            close = self.peek()
            if close.kind != "rparen":
                raise ExpressionSyntaxError("unbalanced parenthesis", close.pos)
            self.advance()
            return node
        if tok.kind == "rparen":
            raise ExpressionSyntaxError("unbalanced parenthesis", tok.pos)
        raise ExpressionSyntaxError("expected a value", tok.pos)


def parse(source: str) -> Expression:
    """Parse expression text into an immutable tree."""
    if not source or not source.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    return _Parser(_tokenize(source)).parse()


def evaluate(e: Expression, t: float) -> float:
    """Evaluate at a scalar t; raises EvaluationError instead of returning inf/nan."""
    value = _eval_scalar(e, t)
    if not math.isfinite(value):
        raise EvaluationError(f"non-finite value at t={t!r}")
    return value


def _eval_scalar(e: Expression, t: float) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return t
    if isinstance(e, Neg):
        return -_eval_scalar(e.operand, t)
    if isinstance(e, Bin):
        a = _eval_scalar(e.left, t)
        b = _eval_scalar(e.right, t)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if b == 0.0:
                raise EvaluationError(f"division by zero at t={t!r}")
            return a / b
        try:
            return math.pow(a, b)
        except (ValueError, OverflowError) as exc:
            raise EvaluationError(f"invalid power {a!r}^{b!r} at t={t!r}") from exc
    a = _eval_scalar(e.argument, t)
    try:
        return getattr(math, e.name)(a)
    except (ValueError, OverflowError) as exc:
        raise EvaluationError(f"{e.name} domain fault at t={t!r}") from exc


def evaluate_on(e: Expression, ts: np.ndarray) -> np.ndarray:
    """Vectorized evaluation on an array of times; all results must be finite."""
    ts = np.asarray(ts, dtype=float)
    with np.errstate(all="ignore"):
        values = _eval_array(e, ts)
    values = np.broadcast_to(np.asarray(values, dtype=float), ts.shape).copy()
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.argmax(bad.ravel()))
        raise EvaluationError(f"non-finite value at t={ts.ravel()[i]!r}")
    return values


def _eval_array(e: Expression, ts: np.ndarray):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return ts
    if isinstance(e, Neg):
        return -_eval_array(e.operand, ts)
    if isinstance(e, Bin):
        a = _eval_array(e.left, ts)
        b = _eval_array(e.right, ts)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return np.divide(a, b)
        return np.power(a, b)
    a = _eval_array(e.argument, ts)
    return getattr(np, e.name)(a)


def _total(e: Expression) -> bool:
    """True when e evaluates without faults for every finite t (no poles, no overflow-prone exp)."""
    if isinstance(e, Const):
        return math.isfinite(e.value)
    if isinstance(e, Var):
        return True
    if isinstance(e, Neg):
        return _total(e.operand)
    if isinstance(e, Bin):
        if e.op == "/":
            return False
        if e.op == "^":
            return (
                _total(e.left)
                and isinstance(e.right, Const)
                and e.right.value >= 0.0
                and float(e.right.value).is_integer()
            )
        return _total(e.left) and _total(e.right)
    return e.name in ("sin", "cos") and _total(e.argument)


def _simplify(e: Expression) -> Expression:
    """Constant folding and identity elimination; annihilation (0*x -> 0,
    x^0 -> 1) only when x provably never faults, so error behaviour is kept."""
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, Neg):
        a = _simplify(e.operand)
        if isinstance(a, Const):
            return Const(-a.value)
        if isinstance(a, Neg):
            return a.operand
        return Neg(a)
    if isinstance(e, Fun):
        a = _simplify(e.argument)
        if isinstance(a, Const):
            try:
                return Const(evaluate(Fun(e.name, a), 0.0))
            except EvaluationError:
                pass
        return Fun(e.name, a)
    a = _simplify(e.left)
    b = _simplify(e.right)
    if isinstance(a, Const) and isinstance(b, Const):
        try:
            return Const(evaluate(Bin(e.op, a, b), 0.0))
        except EvaluationError:
            pass
    zero_a = isinstance(a, Const) and a.value == 0.0
    zero_b = isinstance(b, Const) and b.value == 0.0
    one_a = isinstance(a, Const) and a.value == 1.0
    one_b = isinstance(b, Const) and b.value == 1.0
    if e.op == "+":
        if zero_a:
            return b
        if zero_b:
            return a
    elif e.op == "-":
        if zero_b:
            return a
        if zero_a:
            return _simplify(Neg(b))
    elif e.op == "*":
        if one_a:
            return b
        if one_b:
            return a
        if (zero_a and _total(b)) or (zero_b and _total(a)):
            return Const(0.0)
    elif e.op == "/":
        if one_b:
            return a
    elif e.op == "^":
        if one_b:
            return a
        if zero_b and _total(a):
            return Const(1.0)
    return Bin(e.op, a, b)


def differentiate(e: Expression) -> Expression:
    """Exact symbolic derivative; repeated application is valid to any order.

    The result is lightly folded (constant arithmetic, identity and guarded
    annihilation elimination) so chained derivatives stay small.
    """
    return _simplify(_differentiate(e))


def _differentiate(e: Expression) -> Expression:
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0)
    if isinstance(e, Neg):
        return Neg(_differentiate(e.operand))
    if isinstance(e, Bin):
        if e.op in ("+", "-"):
            return Bin(e.op, _differentiate(e.left), _differentiate(e.right))
        if e.op == "*":
            return Bin(
                "+",
                Bin("*", _differentiate(e.left), e.right),
                Bin("*", e.left, _differentiate(e.right)),
            )
        if e.op == "/":
            num = Bin(
                "-",
                Bin("*", _differentiate(e.left), e.right),
                Bin("*", e.left, _differentiate(e.right)),
            )
            return Bin("/", num, Bin("*", e.right, e.right))
        # power with constant exponent: c * base^(c-1) * base'
        c = evaluate(e.right, 0.0)
        if c == 0.0:
            return Const(0.0)
        return Bin(
            "*",
            Bin("*", Const(c), Bin("^", e.left, Const(c - 1.0))),
            _differentiate(e.left),
        )
    if e.name == "sin":
        return Bin("*", Fun("cos", e.argument), _differentiate(e.argument))
    if e.name == "cos":
        return Bin("*", Neg(Fun("sin", e.argument)), _differentiate(e.argument))
    return Bin("*", Fun("exp", e.argument), _differentiate(e.argument))


def to_text(e: Expression) -> str:
    """Canonical fully parenthesized form; parse(to_text(parse(s))) == parse(s)."""
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return "t"
    if isinstance(e, Neg):
        return f"(-{to_text(e.operand)})"
    if isinstance(e, Bin):
        return f"({to_text(e.left)} {e.op} {to_text(e.right)})"
    return f"{e.name}({to_text(e.argument)})"
