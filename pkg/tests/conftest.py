"""Shared helpers: seeded random expressions and finite-difference oracles."""

from __future__ import annotations

import numpy as np

from implipde.expr import add, const, func, mul, power, sub, var


def random_expr(rng: np.random.Generator, names, depth: int = 3):
    """Random polynomial/trig expression over the given variables.

    Stays inside function domains for positive arguments, so evaluation on
    modest boxes never leaves the reals.
    """
    if depth == 0 or rng.random() < 0.3:
        if rng.random() < 0.7:
            return var(names[rng.integers(len(names))])
        return const(round(float(rng.uniform(-2, 2)), 3))
    kind = rng.integers(6)
    if kind == 0:
        return add(random_expr(rng, names, depth - 1), random_expr(rng, names, depth - 1))
    if kind == 1:
        return sub(random_expr(rng, names, depth - 1), random_expr(rng, names, depth - 1))
    if kind == 2:
        return mul(random_expr(rng, names, depth - 1), random_expr(rng, names, depth - 1))
    if kind == 3:
        return func(("sin", "cos")[rng.integers(2)], random_expr(rng, names, depth - 1))
    if kind == 4:
        return mul(const(0.5), func("exp", mul(const(0.3), random_expr(rng, names, depth - 1))))
    return power(random_expr(rng, names, depth - 1), const(float(rng.integers(2, 4))))


def central_diff(f, x: float, h: float = 1e-5) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)


def fd_gradient(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    out = np.zeros_like(x)
    for i in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        out[i] = (f(xp) - f(xm)) / (2.0 * h)
    return out


def fd_hessian(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    n = len(x)
    out = np.zeros((n, n))
    f0 = f(x)
    for i in range(n):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        out[i, i] = (f(xp) - 2.0 * f0 + f(xm)) / (h * h)
        for j in range(i + 1, n):
            xpp, xpm, xmp, xmm = x.copy(), x.copy(), x.copy(), x.copy()
            xpp[[i, j]] += h
            xmm[[i, j]] -= h
            xpm[i] += h
            xpm[j] -= h
            xmp[i] -= h
            xmp[j] += h
            val = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * h * h)
            out[i, j] = val
            out[j, i] = val
    return out
