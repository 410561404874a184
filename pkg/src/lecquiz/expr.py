"""Arithmetic expressions found in answer options, and equivalence between them.

Options such as ``"log2(0.25)"``, ``"0.469 bits"`` or ``"n*R*ln(V2/V1)"`` are
parsed into a small AST.  Constant expressions are compared by value;
expressions with free symbols are compared at random sample points.

Grammar (``^`` is right-associative and binds tighter than unary minus)::

    sum     := product (("+" | "-") product)*
    product := unary (("*" | "/") unary)*
    unary   := ("-" | "+") unary | power
    power   := atom ("^" unary)?
    atom    := NUMBER | SYMBOL | FUNC "(" sum ")" | "(" sum ")"
"""
from __future__ import annotations

import enum
import math
import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

FUNCTIONS = ("log", "log2", "log10", "ln", "exp", "sqrt", "abs")
BINARY_OPS = ("+", "-", "*", "/", "^")
DEFAULT_UNITS = ("bits", "bit", "J/K", "nats")


class ExprError(ValueError):
    """Base class for expression failures."""


class ExprSyntaxError(ExprError):
    pass


class DomainError(ExprError):
    """The expression has no finite real value at the given point."""


class UnboundVariableError(ExprError):
    def __init__(self, name: str):
        super().__init__(f"unbound variable {name!r}")
        self.name = name


@dataclass(frozen=True)
class Expr:
    """One AST node.

    ``kind`` is one of ``num``, ``var``, ``neg``, ``pos``, ``bin`` or
    ``call``.  ``value`` holds the float for ``num``, the symbol name for
    ``var``, the operator for ``bin`` and the function name for ``call``.
    """

    kind: str
    value: object = None
    children: tuple["Expr", ...] = ()

    def free_variables(self) -> frozenset[str]:
        if self.kind == "var":
            return frozenset([self.value])
        out: frozenset[str] = frozenset()
        for child in self.children:
            out |= child.free_variables()
        return out

    def __str__(self) -> str:
        return to_text(self)


def Num(v: float) -> Expr:
    return Expr("num", float(v))


def Var(name: str) -> Expr:
    return Expr("var", name)


def Neg(e: Expr) -> Expr:
    return Expr("neg", None, (e,))


def Bin(op: str, left: Expr, right: Expr) -> Expr:
    return Expr("bin", op, (left, right))


def Call(fn: str, arg: Expr) -> Expr:
    return Expr("call", fn, (arg,))


# -- tokenizer / parser ------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    \s*(?:
      (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
     |(?P<sym>[A-Za-z][A-Za-z0-9_]*)
     |(?P<op>\*\*|[-+*/^()])
    )""",
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos:].lstrip()[:1]!r}")
        kind = m.lastgroup
        tok = m.group(kind)
        if kind == "op" and tok == "**":
            tok = "^"
        tokens.append((kind, tok))
        pos = m.end()
    tokens.append(("end", ""))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> tuple[str, str]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op: str) -> None:
        kind, tok = self.take()
        if kind != "op" or tok != op:
            raise ExprSyntaxError(f"expected {op!r}, got {tok or 'end of input'!r}")

    def parse(self) -> Expr:
        node = self.sum()
        if self.peek()[0] != "end":
            raise ExprSyntaxError(f"trailing input at {self.peek()[1]!r}")
        return node

    def sum(self) -> Expr:
        node = self.product()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            node = Bin(op, node, self.product())
        return node

    def product(self) -> Expr:
        node = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            node = Bin(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.peek() == ("op", "-"):
            self.take()
            return Neg(self.unary())
        if self.peek() == ("op", "+"):
            self.take()
            return Expr("pos", None, (self.unary(),))
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            return Bin("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, tok = self.take()
        if kind == "num":
            value = float(tok)
            if not math.isfinite(value):
                raise ExprSyntaxError(f"literal {tok!r} is not finite")
            return Num(value)
        if kind == "sym":
            if tok in FUNCTIONS:
                self.expect("(")
                arg = self.sum()
                self.expect(")")
                return Call(tok, arg)
            return Var(tok)
        if (kind, tok) == ("op", "("):
            node = self.sum()
            self.expect(")")
            return node
        raise ExprSyntaxError(f"unexpected {tok or 'end of input'!r}")


def parse_expr(text: str) -> Expr:
    """Parse ``text`` or raise :class:`ExprSyntaxError`."""
    return _Parser(text).parse()


# -- printing ----------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _fmt_num(v: float) -> str:
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _show(e: Expr) -> tuple[str, int]:
    if e.kind == "num":
        return _fmt_num(e.value), 5
    if e.kind == "var":
        return e.value, 5
    if e.kind == "call":
        return f"{e.value}({_show(e.children[0])[0]})", 5
    if e.kind in ("neg", "pos"):
        sign = "-" if e.kind == "neg" else "+"
        return sign + _wrap(e.children[0], 3), 3
    op = e.value
    left, right = e.children
    if op == "^":
        return f"{_wrap(left, 5)}^{_wrap(right, 3)}", 4
    prec = _PREC[op]
    return f"{_wrap(left, prec)} {op} {_wrap(right, prec + 1)}", prec


def _wrap(e: Expr, min_prec: int) -> str:
    text, prec = _show(e)
    return text if prec >= min_prec else f"({text})"


def to_text(e: Expr) -> str:
    """Render with the minimum parentheses needed to re-parse to the same tree."""
    return _show(e)[0]


# -- evaluation --------------------------------------------------------------


_LOGS = ("log", "log2", "log10", "ln")


def _call(fn: str, x: float, log_base: float) -> float:
    if fn in _LOGS:
        if x <= 0:
            raise DomainError(f"{fn} of non-positive value {x!r}")
        if fn == "log2" or (fn == "log" and log_base == 2.0):
            return math.log2(x)
        if fn == "log10":
            return math.log10(x)
        if fn == "ln":
            return math.log(x)
        return math.log(x) / math.log(log_base)
    if fn == "sqrt":
        if x < 0:
            raise DomainError(f"sqrt of negative value {x!r}")
        return math.sqrt(x)
    if fn == "exp":
        try:
            return math.exp(x)
        except OverflowError:
            raise DomainError("exp overflow") from None
    if fn == "abs":
        return abs(x)
    raise ExprError(f"unknown function {fn!r}")


def _eval(e: Expr, env: Mapping[str, float], log_base: float) -> float:
    kind = e.kind
    if kind == "num":
        return e.value
    if kind == "var":
        try:
            return float(env[e.value])
        except KeyError:
            raise UnboundVariableError(e.value) from None
    if kind == "neg":
        return -_eval(e.children[0], env, log_base)
    if kind == "pos":
        return _eval(e.children[0], env, log_base)
    if kind == "call":
        return _call(e.value, _eval(e.children[0], env, log_base), log_base)
    a = _eval(e.children[0], env, log_base)
    b = _eval(e.children[1], env, log_base)
    op = e.value
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0:
            raise DomainError("division by zero")
        return a / b
    try:
        r = a**b
    except ZeroDivisionError:
        raise DomainError("zero raised to a negative power") from None
    except OverflowError:
        raise DomainError("power overflow") from None
    if isinstance(r, complex):
        raise DomainError("negative base with fractional exponent")
    return r


def eval_at(e: Expr, bindings: Mapping[str, float], *, log_base: float = 2.0) -> float:
    """Evaluate ``e`` with symbols taken from ``bindings``.

    Raises :class:`DomainError` when any step leaves the reals or the result
    is not finite, and :class:`UnboundVariableError` for a missing symbol.
    """
    value = _eval(e, bindings, log_base)
    if not math.isfinite(value):
        raise DomainError(f"non-finite result {value!r}")
    return value


def eval_const(e: Expr, *, log_base: float = 2.0) -> float:
    """Evaluate an expression that has no free symbols.

    ``log`` without an explicit base uses ``log_base`` (2 by default).

    >>> eval_const(parse_expr("2*log2(0.5)"))
    -2.0
    """
    return eval_at(e, {}, log_base=log_base)


# -- option recognition ------------------------------------------------------


class ParseStatus(str, enum.Enum):
    CONSTANT = "parsed-constant"
    PARAMETRIC = "parsed-parametric"
    NOT_EXPRESSION = "not-an-expression"


@dataclass(frozen=True)
class ParseOutcome:
    status: ParseStatus
    expr: Expr | None = None
    free_variables: frozenset[str] = frozenset()
    stripped_unit: str | None = None
    text: str = ""

    @property
    def is_expression(self) -> bool:
        return self.status is not ParseStatus.NOT_EXPRESSION


def strip_unit(text: str, units: Iterable[str] = DEFAULT_UNITS) -> tuple[str, str | None]:
    """Remove one trailing whitespace-separated unit token, if present."""
    text = text.strip()
    for unit in sorted(units, key=len, reverse=True):
        if text.endswith(unit) and len(text) > len(unit) and text[-len(unit) - 1].isspace():
            return text[: -len(unit)].rstrip(), unit
    return text, None


def parse_option_text(text: str, units: Iterable[str] = DEFAULT_UNITS) -> ParseOutcome:
    """Classify an option string as a constant, a parametric expression or prose."""
    body, unit = strip_unit(text, units)
    if not body:
        return ParseOutcome(ParseStatus.NOT_EXPRESSION, text=body)
    try:
        expr = parse_expr(body)
    except ExprSyntaxError:
        return ParseOutcome(ParseStatus.NOT_EXPRESSION, text=body)
    names = expr.free_variables()
    status = ParseStatus.PARAMETRIC if names else ParseStatus.CONSTANT
    return ParseOutcome(status, expr, names, unit, body)


# -- equivalence -------------------------------------------------------------


class Verdict(str, enum.Enum):
    EQUIVALENT = "equivalent"
    DISTINCT = "distinct"
    INCOMPARABLE = "incomparable"


@dataclass(frozen=True)
class EquivConfig:
    const_tolerance: float = 1e-9
    parametric_trials: int = 5
    sample_low: float = 0.1
    sample_high: float = 2.0
    max_resamples_per_trial: int = 20
    rng_seed: int = 0
    log_base: float = 2.0

    def __post_init__(self):
        if not self.const_tolerance > 0:
            raise ValueError("const_tolerance must be > 0")
        if self.parametric_trials < 1:
            raise ValueError("parametric_trials must be >= 1")
        if self.max_resamples_per_trial < 1:
            raise ValueError("max_resamples_per_trial must be >= 1")
        if not 0 < self.sample_low < self.sample_high:
            raise ValueError("need 0 < sample_low < sample_high")


@dataclass(frozen=True)
class EquivResult:
    verdict: Verdict
    values: tuple[tuple[float, float], ...] = field(default=())


def compare(a: ParseOutcome, b: ParseOutcome, cfg: EquivConfig = EquivConfig()) -> EquivResult:
    """Like :func:`equivalent` but also returns the compared value pairs."""
    if not (a.is_expression and b.is_expression):
        return EquivResult(Verdict.INCOMPARABLE)
    tol = cfg.const_tolerance
    if a.status is ParseStatus.CONSTANT and b.status is ParseStatus.CONSTANT:
        try:
            va = eval_const(a.expr, log_base=cfg.log_base)
            vb = eval_const(b.expr, log_base=cfg.log_base)
        except DomainError:
            return EquivResult(Verdict.INCOMPARABLE)
        verdict = Verdict.EQUIVALENT if abs(va - vb) <= tol else Verdict.DISTINCT
        return EquivResult(verdict, ((va, vb),))

    names = sorted(a.free_variables | b.free_variables)
    rng = random.Random(cfg.rng_seed)
    completed = []
    for _ in range(cfg.parametric_trials):
        for _ in range(1 + cfg.max_resamples_per_trial):
            env = {n: rng.uniform(cfg.sample_low, cfg.sample_high) for n in names}
            try:
                va = eval_at(a.expr, env, log_base=cfg.log_base)
                vb = eval_at(b.expr, env, log_base=cfg.log_base)
            except DomainError:
                continue
            completed.append((va, vb))
            break
    if not completed:
        return EquivResult(Verdict.INCOMPARABLE)
    if all(abs(va - vb) <= tol for va, vb in completed):
        return EquivResult(Verdict.EQUIVALENT, tuple(completed))
    return EquivResult(Verdict.DISTINCT, tuple(completed))


def equivalent(a: ParseOutcome, b: ParseOutcome, cfg: EquivConfig = EquivConfig()) -> Verdict:
    """Decide whether two parsed options denote the same value.

    Constants are compared directly within ``cfg.const_tolerance``.  If either
    side has free symbols, both are evaluated on ``cfg.parametric_trials``
    shared random bindings drawn uniformly from ``[sample_low, sample_high]``;
    a binding that hits a domain error is redrawn.  Prose on either side, or
    no usable binding at all, gives ``INCOMPARABLE``.
    """
    return compare(a, b, cfg).verdict
