"""Scalar expression DSL: parser, evaluator, symbolic differentiation.

Grammar (EBNF):

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' exponent)?            exponent := factor
    base   := number | ident | ident '(' expr ')' | '(' expr ')' | '-' factor

Known functions: sin, cos, exp, log, sqrt.  Any other identifier is a
variable.  Trees are immutable; printing followed by re-parsing returns a
structurally identical tree.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import (
    EvalDomainError,
    ExprSyntaxError,
    UnboundVariableError,
    UnknownFunctionError,
)

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Unary",
    "Bin",
    "Pow",
    "FUNCTIONS",
    "parse",
    "to_string",
    "free_vars",
    "evaluate",
    "sym_diff",
    "substitute",
    "compile_scalar",
]


class Expr:
    """Base class of all expression nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # function name, or 'neg'
    arg: Expr


@dataclass(frozen=True)
class Bin(Expr):
    op: str  # one of + - * /
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: Expr


def _sec_checked(f):
    def wrapped(u: float) -> float:
        v = f(u)
        if not math.isfinite(v):
            raise EvalDomainError(f"non-finite value {v!r}")
        return v

    return wrapped


def _log(u: float) -> float:
    if u <= 0.0:
        raise EvalDomainError(f"log of nonpositive value {u!r}")
    return math.log(u)


def _sqrt(u: float) -> float:
    if u < 0.0:
        raise EvalDomainError(f"sqrt of negative value {u!r}")
    return math.sqrt(u)


def _exp(u: float) -> float:
    try:
        return math.exp(u)
    except OverflowError as e:
        raise EvalDomainError(f"exp overflow at {u!r}") from e


# name -> (f, f', f'') triples; the same table feeds scalar evaluation and
# second-order jet propagation.
FUNCTIONS: dict[str, tuple] = {
    "sin": (math.sin, math.cos, lambda u: -math.sin(u)),
    "cos": (math.cos, lambda u: -math.sin(u), lambda u: -math.cos(u)),
    "exp": (_exp, _exp, _exp),
    "log": (_log, lambda u: 1.0 / u, lambda u: -1.0 / (u * u)),
    "sqrt": (
        _sqrt,
        lambda u: 0.5 / math.sqrt(u),
        lambda u: -0.25 / math.sqrt(u) ** 3,
    ),
}


# ---------------------------------------------------------------------------
# smart constructors (light constant folding; arithmetic folds are the exact
# same IEEE operations evaluation would perform, so values are unchanged)

def const(v: float) -> Const:
    return Const(float(v))


def var(name: str) -> Var:
    return Var(name)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if isinstance(a, Const) and a.value == 0.0:
        return b
    if isinstance(b, Const) and b.value == 0.0:
        return a
    return Bin("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if isinstance(b, Const) and b.value == 0.0:
        return a
    if isinstance(a, Const) and a.value == 0.0:
        return neg(b)
    return Bin("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if isinstance(a, Const):
        if a.value == 0.0:
            return Const(0.0)
        if a.value == 1.0:
            return b
    if isinstance(b, Const):
        if b.value == 0.0:
            return Const(0.0)
        if b.value == 1.0:
            return a
    return Bin("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(b, Const) and b.value == 1.0:
        return a
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    if isinstance(a, Const) and a.value == 0.0 and not (
        isinstance(b, Const) and b.value == 0.0
    ):
        return Const(0.0)
    return Bin("/", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def power(base: Expr, exponent: Expr) -> Expr:
    if isinstance(exponent, Const):
        if exponent.value == 1.0:
            return base
        if exponent.value == 0.0:
            return Const(1.0)
    if isinstance(base, Const) and isinstance(exponent, Const):
        try:
            return Const(math.pow(base.value, exponent.value))
        except (ValueError, OverflowError):
            pass
    return Pow(base, exponent)


def func(name: str, arg: Expr) -> Expr:
    return Unary(name, arg)


# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN_RE = re.compile(
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, symbol: str) -> None:
        kind, text, off = self.peek()
        if kind != "op" or text != symbol:
            raise ExprSyntaxError(f"expected '{symbol}'", off)
        self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {text!r}", off)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                rhs = self.term()
                e = add(e, rhs) if text == "+" else sub(e, rhs)
            else:
                return e

    def term(self) -> Expr:
        e = self.factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                rhs = self.factor()
                e = mul(e, rhs) if text == "*" else div(e, rhs)
            else:
                return e

    def factor(self) -> Expr:
        base = self.base()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            exponent = self.factor()
            return power(base, exponent)
        return base

    def base(self) -> Expr:
        kind, text, off = self.advance()
        if kind == "num":
            return Const(float(text))
        if kind == "ident":
            nkind, ntext, _ = self.peek()
            if nkind == "op" and ntext == "(":
                if text not in FUNCTIONS:
                    raise UnknownFunctionError(text, off)
                self.advance()
                arg = self.expr()
                self.expect_op(")")
                return func(text, arg)
            return Var(text)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        if kind == "op" and text == "-":
            return neg(self.factor())
        raise ExprSyntaxError(f"unexpected {text!r}" if text else "unexpected end of input", off)


def parse(text: str) -> Expr:
    """Parse DSL source into an expression tree."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printing (inverse of parse on the trees the public constructors produce)

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _prec(e: Expr) -> int:
    if isinstance(e, (Const, Var)):
        if isinstance(e, Const) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
            return _PREC_NEG  # prints with a leading '-'
        return _PREC_ATOM
    if isinstance(e, Bin):
        return _PREC_ADD if e.op in "+-" else _PREC_MUL
    if isinstance(e, Unary):
        return _PREC_NEG if e.op == "neg" else _PREC_ATOM
    if isinstance(e, Pow):
        return _PREC_POW
    raise TypeError(f"not an Expr: {e!r}")


def _fmt_const(v: float) -> str:
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _wrap(e: Expr, minimum: int) -> str:
    s = to_string(e)
    return f"({s})" if _prec(e) < minimum else s


def to_string(e: Expr) -> str:
    """Render an expression in DSL syntax."""
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Bin):
        # the grammar is left-associative: a same-precedence right operand
        # must be parenthesized or it would rebind on re-parse
        if e.op in "+-":
            left = _wrap(e.left, _PREC_ADD)
            right = _wrap(e.right, _PREC_ADD + 1)
            return f"{left} {e.op} {right}"
        left = _wrap(e.left, _PREC_MUL)
        right = _wrap(e.right, _PREC_MUL + 1)
        return f"{left}{e.op}{right}"
    if isinstance(e, Unary):
        if e.op == "neg":
            return "-" + _wrap(e.arg, _PREC_NEG)
        return f"{e.op}({to_string(e.arg)})"
    if isinstance(e, Pow):
        # the grammar's pow base is an atom: parenthesize anything else,
        # including negative literals ("-3^2" would rebind as -(3^2))
        base = _wrap(e.base, _PREC_ATOM)
        exponent = _wrap(e.exponent, _PREC_NEG)
        return f"{base}^{exponent}"
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# structural queries

def free_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Unary):
        return free_vars(e.arg)
    if isinstance(e, Bin):
        return free_vars(e.left) | free_vars(e.right)
    if isinstance(e, Pow):
        return free_vars(e.base) | free_vars(e.exponent)
    raise TypeError(f"not an Expr: {e!r}")


def substitute(e: Expr, mapping: dict[str, Expr]) -> Expr:
    """Replace variables by expressions, rebuilding through the folding constructors."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Unary):
        arg = substitute(e.arg, mapping)
        return neg(arg) if e.op == "neg" else func(e.op, arg)
    if isinstance(e, Bin):
        left = substitute(e.left, mapping)
        right = substitute(e.right, mapping)
        return {"+": add, "-": sub, "*": mul, "/": div}[e.op](left, right)
    if isinstance(e, Pow):
        return power(substitute(e.base, mapping), substitute(e.exponent, mapping))
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# evaluation

def _check_finite(v: float) -> float:
    if not math.isfinite(v):
        raise EvalDomainError(f"non-finite value {v!r}")
    return v


def _pow_value(b: float, p: float) -> float:
    try:
        return math.pow(b, p)
    except (ValueError, OverflowError) as e:
        raise EvalDomainError(f"pow domain error for {b!r}^{p!r}") from e


def evaluate(e: Expr, bindings: dict[str, float]) -> float:
    """Evaluate at a full binding of the free variables.

    Raises UnboundVariableError for missing bindings and EvalDomainError for
    any operation that leaves the finite reals.
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return bindings[e.name]
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Unary):
        u = evaluate(e.arg, bindings)
        if e.op == "neg":
            return -u
        return _check_finite(FUNCTIONS[e.op][0](u))
    if isinstance(e, Bin):
        a = evaluate(e.left, bindings)
        b = evaluate(e.right, bindings)
        if e.op == "+":
            return _check_finite(a + b)
        if e.op == "-":
            return _check_finite(a - b)
        if e.op == "*":
            return _check_finite(a * b)
        if b == 0.0:
            raise EvalDomainError("division by zero")
        return _check_finite(a / b)
    if isinstance(e, Pow):
        b = evaluate(e.base, bindings)
        p = evaluate(e.exponent, bindings)
        return _check_finite(_pow_value(b, p))
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# symbolic differentiation

_FN_DERIV = {
    "sin": lambda u: func("cos", u),
    "cos": lambda u: neg(func("sin", u)),
    "exp": lambda u: func("exp", u),
    "log": lambda u: div(Const(1.0), u),
    "sqrt": lambda u: div(Const(1.0), mul(Const(2.0), func("sqrt", u))),
}


def sym_diff(e: Expr, name: str) -> Expr:
    """Derivative of e with respect to the variable `name`.

    Expressions without the variable differentiate to the zero constant.
    """
    if name not in free_vars(e):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0)
    if isinstance(e, Unary):
        du = sym_diff(e.arg, name)
        if e.op == "neg":
            return neg(du)
        return mul(_FN_DERIV[e.op](e.arg), du)
    if isinstance(e, Bin):
        da = sym_diff(e.left, name)
        db = sym_diff(e.right, name)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, e.right), mul(e.left, db))
        return div(sub(mul(da, e.right), mul(e.left, db)), power(e.right, Const(2.0)))
    if isinstance(e, Pow):
        base, expo = e.base, e.exponent
        if isinstance(expo, Const):
            return mul(
                mul(expo, power(base, Const(expo.value - 1.0))),
                sym_diff(base, name),
            )
        # general u^w = exp(w log u)
        term = add(
            mul(sym_diff(expo, name), func("log", base)),
            mul(expo, div(sym_diff(base, name), base)),
        )
        return mul(e, term)
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# compilation to a fast callable (used in root-finding hot loops; mirrors the
# tree structure so results agree with `evaluate` where both are defined)

def _emit(e: Expr, index: dict[str, int]) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return f"v[{index[e.name]}]"
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{_emit(e.arg, index)})"
        return f"_{e.op}({_emit(e.arg, index)})"
    if isinstance(e, Bin):
        return f"({_emit(e.left, index)}{e.op}{_emit(e.right, index)})"
    if isinstance(e, Pow):
        return f"_powf({_emit(e.base, index)},{_emit(e.exponent, index)})"
    raise TypeError(f"not an Expr: {e!r}")


def compile_scalar(e: Expr, var_order: list[str] | tuple[str, ...]):
    """Compile to `f(v)` taking one sequence of values in `var_order`.

    Domain violations surface as ordinary ValueError/ZeroDivisionError/
    OverflowError; callers in scan loops treat any exception as "no value".
    """
    index = {name: i for i, name in enumerate(var_order)}
    missing = free_vars(e) - set(index)
    if missing:
        raise UnboundVariableError(sorted(missing)[0])
    namespace = {
        "_sin": math.sin,
        "_cos": math.cos,
        "_exp": math.exp,
        "_log": math.log,
        "_sqrt": math.sqrt,
        "_powf": math.pow,
    }
    return eval(f"lambda v: {_emit(e, index)}", namespace)  # noqa: S307
