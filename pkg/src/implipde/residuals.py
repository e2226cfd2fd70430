"""Residuals of every transformation-invariant equation handled by the package.

Each equation has a raw form and a dimensionless normalization: the scale of
an equation at a point is the sum of the absolute values of its additive
terms (floored at 1e-300), so tolerances mean the same thing across families
of wildly different magnitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EvalDomainError, NoRootError, SingularPointError
from .expr import Expr, evaluate, free_vars, substitute, sym_diff
from .implicit import FieldJet
from .jets import jet_eval

__all__ = [
    "SCALE_FLOOR",
    "PointRecord",
    "ResidualReport",
    "f_pair",
    "bateman_residual",
    "ufe_residual",
    "sum_bateman_residual",
    "complex_bateman_residual",
    "example2_residual",
    "a_surface_residuals",
    "first_order_system_residual",
    "first_order_system_explicit",
    "perm_abs",
]

SCALE_FLOOR = 1e-300


def normalized(raw: float, scale: float) -> float:
    return raw / max(scale, SCALE_FLOOR)


# ---------------------------------------------------------------------------
# report containers

@dataclass(frozen=True)
class PointRecord:
    x: tuple[float, ...]
    phi: Optional[float]
    raw: Optional[float]
    scale: Optional[float]
    normalized: Optional[float]
    status: str  # "ok" or an error kind


@dataclass(frozen=True)
class ResidualReport:
    equation: str
    tolerance: float
    records: tuple[PointRecord, ...]
    companion: Optional["ResidualReport"] = None

    @property
    def ok_records(self) -> list[PointRecord]:
        return [r for r in self.records if r.status == "ok"]

    @property
    def n_ok(self) -> int:
        return len(self.ok_records)

    @property
    def n_failed(self) -> int:
        return len(self.records) - self.n_ok

    @property
    def max_normalized(self) -> Optional[float]:
        ok = self.ok_records
        if not ok:
            return None
        return max(abs(r.normalized) for r in ok)

    @property
    def mean_normalized(self) -> Optional[float]:
        ok = self.ok_records
        if not ok:
            return None
        return sum(abs(r.normalized) for r in ok) / len(ok)

    @property
    def passed(self) -> bool:
        if self.n_ok == 0:
            return False
        if self.max_normalized > self.tolerance:
            return False
        if self.companion is not None and not self.companion.passed:
            return False
        return True

    @classmethod
    def from_jets(cls, equation: str, tolerance: float, jets, terms_fn) -> "ResidualReport":
        """Build a report by applying a (jet -> (raw, scale)) function pointwise."""
        records = []
        for j in jets:
            raw, scale = terms_fn(j)
            records.append(
                PointRecord(
                    x=tuple(float(v) for v in j.x),
                    phi=j.phi,
                    raw=raw,
                    scale=scale,
                    normalized=normalized(raw, scale),
                    status="ok",
                )
            )
        return cls(equation, tolerance, tuple(records))


# ---------------------------------------------------------------------------
# pairwise quasilinear combination (the building block of everything below)

def f_pair_terms(j: FieldJet, p: int, q: int) -> tuple[float, float]:
    g, h = j.grad, j.hess
    t1 = g[p] * g[p] * h[q, q]
    t2 = 2.0 * g[p] * g[q] * h[p, q]
    t3 = g[q] * g[q] * h[p, p]
    return t1 - t2 + t3, abs(t1) + abs(t2) + abs(t3)


def f_pair(j: FieldJet, p: int, q: int) -> float:
    """(phi_p)^2 phi_qq - 2 phi_p phi_q phi_pq + (phi_q)^2 phi_pp; symmetric in (p, q)."""
    if p == q:
        raise ValueError("f_pair requires distinct indices")
    n = j.n
    if not (0 <= p < n and 0 <= q < n):
        raise IndexError(f"indices ({p}, {q}) out of range for n={n}")
    return f_pair_terms(j, p, q)[0]


def bateman_terms(j: FieldJet) -> tuple[float, float]:
    if j.n != 2:
        raise ValueError(f"Bateman residual needs n=2, got n={j.n}")
    return f_pair_terms(j, 0, 1)


def bateman_residual(j: FieldJet) -> float:
    """Two-variable quasilinear equation whose general solution is implicit."""
    return bateman_terms(j)[0]


def sum_bateman_terms(j: FieldJet) -> tuple[float, float]:
    if j.n != 3:
        raise ValueError(f"sum-Bateman residual needs n=3, got n={j.n}")
    raws, scales = zip(*(f_pair_terms(j, p, q) for p, q in ((0, 1), (1, 2), (0, 2))))
    return sum(raws), sum(scales)


def sum_bateman_residual(j: FieldJet) -> float:
    """f_12 + f_23 + f_13, the Euclidean-gradient-norm Lagrangian equation."""
    return sum_bateman_terms(j)[0]


# ---------------------------------------------------------------------------
# bordered determinant (Universal Field Equation)

def perm_abs(a: np.ndarray) -> float:
    """Permanent of |a|: the sum of absolute values of a determinant's terms."""
    a = np.abs(np.asarray(a, dtype=float))
    k = a.shape[0]
    if k == 1:
        return float(a[0, 0])
    total = 0.0
    rest = a[1:]
    for col in range(k):
        if a[0, col] != 0.0:
            total += a[0, col] * perm_abs(np.delete(rest, col, axis=1))
    return total


def bordered_matrix(j: FieldJet) -> np.ndarray:
    n = j.n
    b = np.zeros((n + 1, n + 1))
    b[0, 1:] = j.grad
    b[1:, 0] = j.grad
    b[1:, 1:] = j.hess
    return b


def ufe_terms(j: FieldJet) -> tuple[float, float]:
    if j.n < 2:
        raise ValueError("Universal Field Equation needs n >= 2")
    b = bordered_matrix(j)
    return float(np.linalg.det(b)), perm_abs(b)


def ufe_residual(j: FieldJet) -> float:
    """Determinant of the gradient-bordered Hessian; zero for universal solutions."""
    return ufe_terms(j)[0]


# ---------------------------------------------------------------------------
# four-variable complex form

def complex_bateman_terms(j: FieldJet) -> tuple[float, float]:
    if j.n != 4:
        raise ValueError(f"complex Bateman residual needs n=4, got n={j.n}")
    g, h = j.grad, j.hess
    # variable order (x, y, z, w); the sign pattern is the one annihilated by
    # matching constraints F(x,y,phi) = G(z,w,phi), equivalently
    # phi_w d/dz(phi_x/phi_y) - phi_z d/dw(phi_x/phi_y) = 0
    t1 = g[0] * g[2] * h[1, 3]
    t2 = g[0] * g[3] * h[1, 2]
    t3 = g[1] * g[2] * h[0, 3]
    t4 = g[1] * g[3] * h[0, 2]
    return t1 - t2 - t3 + t4, abs(t1) + abs(t2) + abs(t3) + abs(t4)


def complex_bateman_residual(j: FieldJet) -> float:
    """phi_x phi_z phi_yw - phi_x phi_w phi_yz - phi_y phi_z phi_xw + phi_y phi_w phi_xz."""
    return complex_bateman_terms(j)[0]


# ---------------------------------------------------------------------------
# diagonal-constraint equation (two variables)

def example2_terms(j: FieldJet, x=None) -> tuple[float, float]:
    if j.n != 2:
        raise ValueError(f"diagonal-constraint residual needs n=2, got n={j.n}")
    if x is None:
        x = j.x
    x1, x2 = float(x[0]), float(x[1])
    g = j.grad
    t1 = g[0] * g[0] * g[1] * x1
    t2 = g[0] * g[1] * g[1] * x2
    f_raw, f_scale = f_pair_terms(j, 0, 1)
    t3 = x1 * x2 * f_raw
    scale = abs(t1) + abs(t2) + abs(x1 * x2) * f_scale
    return t1 + t2 - t3, scale


def example2_residual(j: FieldJet, x=None) -> float:
    """phi_1^2 phi_2 x1 + phi_1 phi_2^2 x2 - x1 x2 f_12."""
    return example2_terms(j, x)[0]


# ---------------------------------------------------------------------------
# surface-representation residuals A(phi, x1, x2)

def a_surface_residuals(a_expr: Expr, x12, phi_value: float) -> tuple[float, float]:
    """(Monge-Ampere, two-dimensional Bateman) residuals of A at fixed phi.

    Derivatives are taken in the surface coordinates (x1, x2) only.
    """
    j = jet_eval(a_expr, np.asarray(x12, dtype=float), ("x1", "x2"), params={"phi": phi_value})
    h = j.hess
    monge_ampere = h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]
    a1, a2 = j.grad
    bate2d = (1.0 + a1 * a1) * h[1, 1] + (1.0 + a2 * a2) * h[0, 0] - 2.0 * a1 * a2 * h[0, 1]
    return float(monge_ampere), float(bate2d)


def a_surface_terms(a_expr: Expr, x12, phi_value: float):
    """Same as a_surface_residuals but with (raw, scale) pairs."""
    j = jet_eval(a_expr, np.asarray(x12, dtype=float), ("x1", "x2"), params={"phi": phi_value})
    h = j.hess
    ma_raw = h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]
    ma_scale = abs(h[0, 0] * h[1, 1]) + abs(h[0, 1] * h[1, 0])
    a1, a2 = j.grad
    t1 = (1.0 + a1 * a1) * h[1, 1]
    t2 = (1.0 + a2 * a2) * h[0, 0]
    t3 = 2.0 * a1 * a2 * h[0, 1]
    return (float(ma_raw), float(ma_scale)), (float(t1 + t2 - t3), abs(t1) + abs(t2) + abs(t3))


# ---------------------------------------------------------------------------
# first-order system of the four-variable equation

_SINGULAR_EPS = 1e-10


def _solve_matching_phi(f_expr: Expr, g_expr: Expr, point) -> float:
    """Solve F(x, y, phi) = G(z, w, phi) for phi at the point."""
    x, y, z, w = (float(v) for v in point)
    fb = {"x": x, "y": y}
    gb = {"z": z, "w": w}
    f_phi = sym_diff(f_expr, "phi")
    g_phi = sym_diff(g_expr, "phi")
    if "phi" not in free_vars(f_phi) and "phi" not in free_vars(g_phi):
        # affine in phi: exact closed form
        a = evaluate(f_expr, {**fb, "phi": 0.0})
        b = evaluate(f_phi, {**fb, "phi": 0.0})
        c = evaluate(g_expr, {**gb, "phi": 0.0})
        d = evaluate(g_phi, {**gb, "phi": 0.0})
        if b - d == 0.0:
            raise SingularPointError("matching constraint is degenerate in phi")
        return (c - a) / (b - d)
    # general case: damped Newton with a coarse scan fallback
    def c_fn(phi):
        return evaluate(f_expr, {**fb, "phi": phi}) - evaluate(g_expr, {**gb, "phi": phi})

    def cphi_fn(phi):
        return evaluate(f_phi, {**fb, "phi": phi}) - evaluate(g_phi, {**gb, "phi": phi})

    phi = 0.0
    for start in (0.0, 1.0, -1.0, 2.0, -2.0):
        phi = start
        try:
            for _ in range(80):
                v = c_fn(phi)
                if abs(v) <= 1e-13:
                    return phi
                d = cphi_fn(phi)
                if d == 0.0:
                    break
                phi -= v / d
        except EvalDomainError:
            continue
    raise NoRootError(f"no matching phi found at point {tuple(point)}")


def first_order_system_residual(
    f_expr: Expr, g_expr: Expr, point, phi: Optional[float] = None
) -> tuple[float, float, float, float]:
    """Residuals of u_x - v u_y, v_z - u v_w, phi_x - v phi_y, phi_z - u phi_w.

    F is a function of (x, y, phi), G of (z, w, phi); phi is defined by
    F = G and differentiated implicitly.
    """
    raws, _ = first_order_system_terms(f_expr, g_expr, point, phi)
    return raws


def first_order_system_terms(
    f_expr: Expr, g_expr: Expr, point, phi: Optional[float] = None
):
    x, y, z, w = (float(v) for v in point)
    if phi is None:
        phi = _solve_matching_phi(f_expr, g_expr, point)
    jf = jet_eval(f_expr, (x, y, phi), ("x", "y", "phi"))
    jg = jet_eval(g_expr, (z, w, phi), ("z", "w", "phi"))
    fx, fy, fphi = jf.grad
    gz, gw, gphi = jg.grad
    if abs(fy) < _SINGULAR_EPS or abs(gw) < _SINGULAR_EPS:
        raise SingularPointError("F_y or G_w vanishes; u, v are undefined here")
    cphi = fphi - gphi
    if abs(cphi) < _SINGULAR_EPS:
        raise SingularPointError("matching constraint is singular in phi")
    hf, hg = jf.hess, jg.hess
    phi_x, phi_y = -fx / cphi, -fy / cphi
    phi_z, phi_w = gz / cphi, gw / cphi
    v = fx / fy
    u = gz / gw
    u_phi = (hg[0, 2] * gw - gz * hg[1, 2]) / (gw * gw)
    v_phi = (hf[0, 2] * fy - fx * hf[1, 2]) / (fy * fy)
    u_x, u_y = u_phi * phi_x, u_phi * phi_y
    v_z, v_w = v_phi * phi_z, v_phi * phi_w
    pairs = (
        (u_x, v * u_y),
        (v_z, u * v_w),
        (phi_x, v * phi_y),
        (phi_z, u * phi_w),
    )
    raws = tuple(a - b for a, b in pairs)
    scales = tuple(abs(a) + abs(b) for a, b in pairs)
    return raws, scales


def first_order_system_explicit(
    f_expr: Expr, g_expr: Expr, field: Expr, point
):
    """First-order system for the explicit composite field phi = F(f(x,y), g(z,w)).

    Here v = f_x/f_y and u = g_z/g_w carry no dependence on the opposite
    variable pair, so the advection residuals reduce to the transport of phi.
    """
    x, y, z, w = (float(v) for v in point)
    jf = jet_eval(f_expr, (x, y), ("x", "y"))
    jg = jet_eval(g_expr, (z, w), ("z", "w"))
    if abs(jf.grad[1]) < _SINGULAR_EPS or abs(jg.grad[1]) < _SINGULAR_EPS:
        raise SingularPointError("f_y or g_w vanishes; u, v are undefined here")
    v = jf.grad[0] / jf.grad[1]
    u = jg.grad[0] / jg.grad[1]
    jphi = jet_eval(field, (x, y, z, w), ("x1", "x2", "x3", "x4"))
    phi_x, phi_y, phi_z, phi_w = jphi.grad
    pairs = (
        (0.0, v * 0.0),
        (0.0, u * 0.0),
        (phi_x, v * phi_y),
        (phi_z, u * phi_w),
    )
    raws = tuple(a - b for a, b in pairs)
    scales = tuple(abs(a) + abs(b) for a, b in pairs)
    return raws, scales
