"""Second-order forward-mode differentiation.

A Jet2 carries value, gradient and Hessian through arithmetic by truncated
Taylor composition.  Only the upper triangle of the Hessian is stored, so
symmetry is structural rather than maintained numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EvalDomainError
from .expr import FUNCTIONS, Bin, Const, Expr, Pow, Unary, Var

__all__ = ["Jet2", "lift", "jet_eval"]

_TRIU_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _triu(m: int) -> tuple[np.ndarray, np.ndarray]:
    if m not in _TRIU_CACHE:
        _TRIU_CACHE[m] = np.triu_indices(m)
    return _TRIU_CACHE[m]


@dataclass(frozen=True)
class Jet2:
    """Value, gradient (length m) and packed upper-triangular Hessian."""

    value: float
    grad: np.ndarray
    hess_upper: np.ndarray  # length m*(m+1)//2, row-major upper triangle

    @property
    def m(self) -> int:
        return self.grad.shape[0]

    @property
    def hess(self) -> np.ndarray:
        """Materialize the full symmetric Hessian."""
        m = self.m
        rows, cols = _triu(m)
        full = np.zeros((m, m))
        full[rows, cols] = self.hess_upper
        full[cols, rows] = self.hess_upper
        return full

    @classmethod
    def constant(cls, value: float, m: int) -> "Jet2":
        return cls(float(value), np.zeros(m), np.zeros(m * (m + 1) // 2))

    def _coerce(self, other) -> "Jet2":
        if isinstance(other, Jet2):
            return other
        return Jet2.constant(float(other), self.m)

    # -- ring operations ---------------------------------------------------

    def __add__(self, other):
        o = self._coerce(other)
        return Jet2(self.value + o.value, self.grad + o.grad, self.hess_upper + o.hess_upper)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return Jet2(self.value - o.value, self.grad - o.grad, self.hess_upper - o.hess_upper)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __neg__(self):
        return Jet2(-self.value, -self.grad, -self.hess_upper)

    def __mul__(self, other):
        o = self._coerce(other)
        rows, cols = _triu(self.m)
        cross = self.grad[rows] * o.grad[cols] + o.grad[rows] * self.grad[cols]
        return Jet2(
            self.value * o.value,
            self.value * o.grad + o.value * self.grad,
            self.value * o.hess_upper + o.value * self.hess_upper + cross,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o.value == 0.0:
            raise EvalDomainError("division by zero")
        v = o.value
        recip = o.compose(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
        return self * recip

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, exponent: float):
        return _pow_const(self, float(exponent))

    # -- composition with a scalar function --------------------------------

    def compose(self, f0: float, f1: float, f2: float) -> "Jet2":
        """Chain rule through a function given (f, f', f'') at this value."""
        rows, cols = _triu(self.m)
        outer = self.grad[rows] * self.grad[cols]
        return Jet2(f0, f1 * self.grad, f1 * self.hess_upper + f2 * outer)


def _check_finite_jet(j: Jet2) -> Jet2:
    if not (
        math.isfinite(j.value)
        and np.all(np.isfinite(j.grad))
        and np.all(np.isfinite(j.hess_upper))
    ):
        raise EvalDomainError("non-finite value in jet")
    return j


def _apply_function(name: str, j: Jet2) -> Jet2:
    f, fp, fpp = FUNCTIONS[name]
    return _check_finite_jet(j.compose(f(j.value), fp(j.value), fpp(j.value)))


def _pow_const(j: Jet2, c: float) -> Jet2:
    if c == 0.0:
        return Jet2.constant(1.0, j.m)
    if c == 1.0:
        return j
    u = j.value
    try:
        f0 = math.pow(u, c)
        f1 = c * math.pow(u, c - 1.0)
        f2 = c * (c - 1.0) * math.pow(u, c - 2.0)
    except (ValueError, OverflowError) as e:
        raise EvalDomainError(f"pow domain error for {u!r}^{c!r}") from e
    return _check_finite_jet(j.compose(f0, f1, f2))


def lift(point, i: int) -> Jet2:
    """Seed jet for coordinate i of a point: value point[i], gradient e_i, zero Hessian."""
    point = np.asarray(point, dtype=float)
    m = point.shape[0]
    if not 0 <= i < m:
        raise IndexError(f"direction {i} out of range for dimension {m}")
    grad = np.zeros(m)
    grad[i] = 1.0
    return Jet2(float(point[i]), grad, np.zeros(m * (m + 1) // 2))


def jet_eval(
    e: Expr,
    point,
    var_order: list[str] | tuple[str, ...],
    params: dict[str, float] | None = None,
) -> Jet2:
    """Evaluate an expression as a jet over the directions in var_order.

    `params` supplies extra variables held constant (zero derivative).
    """
    point = np.asarray(point, dtype=float)
    m = len(var_order)
    env: dict[str, Jet2] = {
        name: lift(point, i) for i, name in enumerate(var_order)
    }
    if params:
        for name, value in params.items():
            env.setdefault(name, Jet2.constant(value, m))
    return _jet_rec(e, env, m)


def _jet_rec(e: Expr, env: dict[str, Jet2], m: int) -> Jet2:
    if isinstance(e, Const):
        return Jet2.constant(e.value, m)
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            from .errors import UnboundVariableError

            raise UnboundVariableError(e.name) from None
    if isinstance(e, Unary):
        arg = _jet_rec(e.arg, env, m)
        if e.op == "neg":
            return -arg
        return _apply_function(e.op, arg)
    if isinstance(e, Bin):
        a = _jet_rec(e.left, env, m)
        b = _jet_rec(e.right, env, m)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return _check_finite_jet(a * b)
        return _check_finite_jet(a / b)
    if isinstance(e, Pow):
        base = _jet_rec(e.base, env, m)
        if isinstance(e.exponent, Const):
            return _pow_const(base, e.exponent.value)
        expo = _jet_rec(e.exponent, env, m)
        return _apply_function("exp", expo * _apply_function("log", base))
    raise TypeError(f"not an Expr: {e!r}")
