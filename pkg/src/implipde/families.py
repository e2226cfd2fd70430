"""Constructors for the named solution families, plus the checks each one
is expected to pass.

Kinds and their constraints (canonical variables x1..xn, unknown phi):

    bateman            x1*F(phi) + x2*G(phi) - 1
    linear             sum_i F_i(phi)*x_i - c
    quadratic          sum_ij M_ij(phi)*x_i*x_j - 1
    chaundy            F(x,y,phi) - G(z,w,phi), (x,y,z,w) -> x1..x4
    explicit_complex   phi = F(f(x,y), g(z,w)) with F in (u,v)
    confocal           x1^2/(a2+phi) + x2^2/(b2+phi) + x3^2/(c2+phi) - 1
    a_surface          x_n - A(phi, x1..x_{n-1})
    explicit_expr      phi = e(x1..xn)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ArityError, EmptyLevelSetError, EvalDomainError, NoRootError
from .expr import (
    Const,
    Expr,
    add,
    const,
    div,
    evaluate,
    free_vars,
    mul,
    neg,
    power,
    sub,
    substitute,
    sym_diff,
    var,
)
from .implicit import (
    Bracket,
    FieldJet,
    Guess,
    ImplicitFamily,
    canonical_vars,
    sample_points,
)
from .jets import jet_eval
from .quadratic import SymFuncMatrix, gate_precheck
from .residuals import (
    PointRecord,
    ResidualReport,
    a_surface_residuals,
    normalized,
    ufe_terms,
)

__all__ = [
    "FamilySpec",
    "ExplicitField",
    "bateman_family",
    "linear_family",
    "quadratic_family",
    "chaundy_family",
    "explicit_complex_family",
    "confocal_family",
    "a_surface_family",
    "explicit_field_family",
    "to_constraint",
    "expected_checks",
    "equipotential_check",
    "homogeneity_check",
    "random_coefficient_fn",
]

KINDS = (
    "bateman",
    "linear",
    "quadratic",
    "chaundy",
    "explicit_complex",
    "confocal",
    "a_surface",
    "explicit_expr",
)


@dataclass(frozen=True)
class ExplicitField:
    """A field given directly as phi = e(x1..xn); jets come straight from e."""

    expr: Expr
    n: int

    def jet_at(self, x, guess: Optional[float] = None) -> FieldJet:
        j = jet_eval(self.expr, np.asarray(x, dtype=float), canonical_vars(self.n))
        return FieldJet.from_jet(x, j)


@dataclass(frozen=True)
class FamilySpec:
    """One named solution family; payload fields depend on the kind."""

    kind: str
    n: int
    F: Optional[Expr] = None
    G: Optional[Expr] = None
    Fs: tuple[Expr, ...] = ()
    c: float = 1.0
    M: Optional[SymFuncMatrix] = None
    f: Optional[Expr] = None
    g: Optional[Expr] = None
    axes: tuple[float, float, float] = (1.0, 4.0, 9.0)
    A: Optional[Expr] = None
    e: Optional[Expr] = None
    degree: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArityError(f"unknown family kind {self.kind!r}")
        _VALIDATORS[self.kind](self)


def _require_vars(e: Expr, allowed: set[str], slot: str) -> None:
    extra = free_vars(e) - allowed
    if extra:
        raise ArityError(f"{slot} uses variable '{sorted(extra)[0]}' outside {sorted(allowed)}")


def _validate_bateman(s: FamilySpec) -> None:
    if s.n != 2 or s.F is None or s.G is None:
        raise ArityError("bateman kind needs n=2 and expressions F, G")
    _require_vars(s.F, {"phi"}, "F")
    _require_vars(s.G, {"phi"}, "G")


def _validate_linear(s: FamilySpec) -> None:
    if len(s.Fs) != s.n:
        raise ArityError(f"linear kind needs {s.n} coefficient functions, got {len(s.Fs)}")
    for i, f in enumerate(s.Fs):
        _require_vars(f, {"phi"}, f"F{i+1}")


def _validate_quadratic(s: FamilySpec) -> None:
    if s.M is None or s.M.n != s.n:
        raise ArityError("quadratic kind needs a matching coefficient matrix")


def _validate_chaundy(s: FamilySpec) -> None:
    if s.n != 4 or s.F is None or s.G is None:
        raise ArityError("chaundy kind needs n=4 and expressions F, G")
    _require_vars(s.F, {"x", "y", "phi"}, "F")
    _require_vars(s.G, {"z", "w", "phi"}, "G")


def _validate_explicit_complex(s: FamilySpec) -> None:
    if s.n != 4 or s.F is None or s.f is None or s.g is None:
        raise ArityError("explicit_complex kind needs n=4 and expressions F, f, g")
    _require_vars(s.F, {"u", "v"}, "F")
    _require_vars(s.f, {"x", "y"}, "f")
    _require_vars(s.g, {"z", "w"}, "g")


def _validate_confocal(s: FamilySpec) -> None:
    if s.n != 3:
        raise ArityError("confocal kind needs n=3")
    if not all(a > 0 for a in s.axes):
        raise ArityError("confocal semi-axes must be positive")


def _validate_a_surface(s: FamilySpec) -> None:
    if s.A is None or s.n < 2:
        raise ArityError("a_surface kind needs an expression A and n >= 2")
    allowed = {"phi"} | set(canonical_vars(s.n - 1))
    _require_vars(s.A, allowed, "A")


def _validate_explicit_expr(s: FamilySpec) -> None:
    if s.e is None:
        raise ArityError("explicit_expr kind needs an expression e")
    _require_vars(s.e, set(canonical_vars(s.n)), "e")


_VALIDATORS = {
    "bateman": _validate_bateman,
    "linear": _validate_linear,
    "quadratic": _validate_quadratic,
    "chaundy": _validate_chaundy,
    "explicit_complex": _validate_explicit_complex,
    "confocal": _validate_confocal,
    "a_surface": _validate_a_surface,
    "explicit_expr": _validate_explicit_expr,
}


def bateman_family(F: Expr, G: Expr) -> FamilySpec:
    return FamilySpec(kind="bateman", n=2, F=F, G=G)


def linear_family(Fs: Sequence[Expr], c: float = 1.0) -> FamilySpec:
    return FamilySpec(kind="linear", n=len(Fs), Fs=tuple(Fs), c=float(c))


def quadratic_family(M: SymFuncMatrix) -> FamilySpec:
    return FamilySpec(kind="quadratic", n=M.n, M=M)


def chaundy_family(F: Expr, G: Expr) -> FamilySpec:
    return FamilySpec(kind="chaundy", n=4, F=F, G=G)


def explicit_complex_family(F: Expr, f: Expr, g: Expr) -> FamilySpec:
    return FamilySpec(kind="explicit_complex", n=4, F=F, f=f, g=g)


def confocal_family(a2: float, b2: float, c2: float) -> FamilySpec:
    return FamilySpec(kind="confocal", n=3, axes=(float(a2), float(b2), float(c2)))


def a_surface_family(A: Expr, n: int = 3) -> FamilySpec:
    return FamilySpec(kind="a_surface", n=n, A=A)


def explicit_field_family(e: Expr, n: int, degree: float = 0.0) -> FamilySpec:
    return FamilySpec(kind="explicit_expr", n=n, e=e, degree=degree)


_CHAUNDY_CANON = {"x": var("x1"), "y": var("x2"), "z": var("x3"), "w": var("x4")}


def chaundy_field_expr(spec: FamilySpec) -> Optional[Expr]:
    """Closed-form phi for matching constraints affine in phi, else None."""
    f_phi = sym_diff(spec.F, "phi")
    g_phi = sym_diff(spec.G, "phi")
    if "phi" in free_vars(f_phi) or "phi" in free_vars(g_phi):
        return None
    zero = {"phi": Const(0.0)}
    numer = sub(substitute(spec.G, zero), substitute(spec.F, zero))
    denom = sub(f_phi, g_phi)
    return substitute(div(numer, denom), _CHAUNDY_CANON)


def explicit_complex_field_expr(spec: FamilySpec) -> Expr:
    composed = substitute(spec.F, {"u": spec.f, "v": spec.g})
    return substitute(composed, _CHAUNDY_CANON)


def to_constraint(spec: FamilySpec, branch=None, **family_kwargs) -> Union[ImplicitFamily, ExplicitField]:
    """Materialize the family: an ImplicitFamily, or an ExplicitField for the
    kinds that bypass root solving."""
    x = [var(name) for name in canonical_vars(spec.n)]
    if spec.kind == "bateman":
        c_expr = sub(add(mul(x[0], spec.F), mul(x[1], spec.G)), Const(1.0))
    elif spec.kind == "linear":
        total: Expr = Const(0.0)
        for fi, xi in zip(spec.Fs, x):
            total = add(total, mul(fi, xi))
        c_expr = sub(total, const(spec.c))
    elif spec.kind == "quadratic":
        c_expr = spec.M.constraint_expr()
    elif spec.kind == "chaundy":
        closed = chaundy_field_expr(spec)
        if closed is not None:
            return ExplicitField(closed, 4)
        c_expr = substitute(sub(spec.F, spec.G), _CHAUNDY_CANON)
    elif spec.kind == "explicit_complex":
        return ExplicitField(explicit_complex_field_expr(spec), 4)
    elif spec.kind == "confocal":
        a2, b2, c2 = spec.axes
        c_expr = sub(
            add(
                add(
                    div(mul(x[0], x[0]), add(const(a2), var("phi"))),
                    div(mul(x[1], x[1]), add(const(b2), var("phi"))),
                ),
                div(mul(x[2], x[2]), add(const(c2), var("phi"))),
            ),
            Const(1.0),
        )
    elif spec.kind == "a_surface":
        c_expr = sub(x[-1], spec.A)
    elif spec.kind == "explicit_expr":
        return ExplicitField(spec.e, spec.n)
    else:  # pragma: no cover - guarded by the validator
        raise ArityError(f"unknown family kind {spec.kind!r}")
    if branch is None:
        return ImplicitFamily(c_expr, spec.n, **family_kwargs)
    return ImplicitFamily(c_expr, spec.n, branch, **family_kwargs)


# ---------------------------------------------------------------------------
# expected checks

_PROBE_TOL = 1e-10


def _a_surface_probe(spec: FamilySpec, seed: int = 0, k: int = 20) -> tuple[bool, bool]:
    """Probe whether A satisfies the Monge-Ampere / 2-D Bateman equations."""
    rng = np.random.default_rng(seed)
    ma_ok, b2_ok = True, True
    for _ in range(k):
        x12 = rng.uniform(0.1, 0.7, 2)
        phi = rng.uniform(0.2, 0.8)
        try:
            ma, b2 = a_surface_residuals(spec.A, x12, phi)
        except EvalDomainError:
            continue
        if abs(ma) > 1e-9:
            ma_ok = False
        if abs(b2) > 1e-9:
            b2_ok = False
    return ma_ok, b2_ok


def _euler_weight(spec: FamilySpec, seed: int = 0, k: int = 20) -> Optional[float]:
    """Return d if e is homogeneous of weight d on a probe sample, else None."""
    rng = np.random.default_rng(seed)
    names = canonical_vars(spec.n)
    ds = []
    for _ in range(k):
        x = rng.uniform(0.5, 1.5, spec.n)
        try:
            j = jet_eval(spec.e, x, names)
        except EvalDomainError:
            continue
        if abs(j.value) < 1e-12:
            continue
        ds.append(float(x @ j.grad) / j.value)
    if not ds or max(ds) - min(ds) > 1e-8:
        return None
    return ds[0]


def expected_checks(spec: FamilySpec) -> tuple[tuple[str, float], ...]:
    """The (equation, tolerance) pairs this family is expected to satisfy."""
    if spec.kind == "bateman":
        return (("bateman", 1e-7),)
    if spec.kind == "linear":
        return (("ufe", 1e-7),)
    if spec.kind == "quadratic":
        if gate_precheck(spec.M):
            return (("ufe", 1e-7),)
        return ()
    if spec.kind in ("chaundy", "explicit_complex"):
        return (("complex_bateman", 1e-10), ("first_order_system", 1e-10))
    if spec.kind == "confocal":
        return (("equipotential", 1e-8),)
    if spec.kind == "a_surface":
        checks = []
        ma_ok, b2_ok = _a_surface_probe(spec)
        if ma_ok:
            checks.append(("ufe", 1e-6))
        if b2_ok and spec.n == 3:
            checks.append(("sum_bateman", 1e-6))
        return tuple(checks)
    if spec.kind == "explicit_expr":
        d = _euler_weight(spec)
        if d is not None and abs(d) < 1e-9:
            return (("ufe", 1e-9),)
        return ()
    return ()


# ---------------------------------------------------------------------------
# confocal equipotential check

def equipotential_check(
    target: Union[FamilySpec, ImplicitFamily],
    phi0: float,
    k: int,
    seed: int,
    xy_box: Optional[tuple[tuple[float, float], tuple[float, float]]] = None,
) -> float:
    """Spread of laplacian/|grad|^2 of the level value over a level set.

    Samples k points with phi(x) = phi0 by solving for x3 given (x1, x2),
    computes r = trace(H)/|g|^2 at each and returns max|r - mean|/|mean|.
    An equipotential family makes r constant on the level set.
    """
    if isinstance(target, FamilySpec):
        fam = to_constraint(target, branch=Guess(phi0))
        if xy_box is None and target.kind == "confocal":
            a2, b2, _ = target.axes
            sa = 0.9 * math.sqrt(a2 + phi0)
            sb = 0.9 * math.sqrt(b2 + phi0)
            xy_box = ((-sa, sa), (-sb, sb))
    else:
        fam = target
    if fam.n != 3:
        raise ArityError("equipotential check needs a three-variable family")
    if xy_box is None:
        xy_box = ((-0.9, 0.9), (-0.9, 0.9))
    solve_fam = ImplicitFamily(fam.constraint, fam.n, Guess(phi0), fam.root_tol, fam.singular_tol)

    from .expr import compile_scalar

    c_fn = compile_scalar(fam.constraint, fam.var_order)

    def residual_at_z(x1: float, x2: float, z: float) -> float:
        v = c_fn((x1, x2, z, phi0))
        if not math.isfinite(v):
            raise ValueError
        return v

    rng = np.random.default_rng(seed)
    values = []
    attempts = 0
    while len(values) < k and attempts < 10 * k:
        attempts += 1
        x1 = rng.uniform(*xy_box[0])
        x2 = rng.uniform(*xy_box[1])
        # bracket a z > 0 with a sign change, expanding geometrically
        try:
            lo, v_lo = 1e-3, residual_at_z(x1, x2, 1e-3)
        except (ValueError, ZeroDivisionError, OverflowError):
            continue
        z_hi, found = 0.1, False
        for _ in range(14):
            try:
                v_hi = residual_at_z(x1, x2, z_hi)
            except (ValueError, ZeroDivisionError, OverflowError):
                break
            if v_lo * v_hi <= 0.0:
                found = True
                break
            lo, v_lo = z_hi, v_hi
            z_hi *= 2.0
        if not found:
            continue
        from scipy.optimize import brentq

        z = brentq(lambda t: residual_at_z(x1, x2, t), lo, z_hi, xtol=1e-14, rtol=8.9e-16)
        point = np.array([x1, x2, z])
        try:
            jet = solve_fam.jet_at(point, guess=phi0)
        except Exception:
            continue
        values.append(float(np.trace(jet.hess) / (jet.grad @ jet.grad)))
    if not values:
        raise EmptyLevelSetError(f"no admissible points with level {phi0!r}")
    r = np.array(values)
    mean = r.mean()
    return float(np.max(np.abs(r - mean)) / abs(mean))


# ---------------------------------------------------------------------------
# homogeneity

def homogeneity_check(
    e: Expr,
    degree: float,
    k: int,
    seed: int,
    box: tuple[float, float] = (0.5, 1.5),
    ufe_tolerance: float = 1e-9,
) -> ResidualReport:
    """Euler relation sum_i x_i d_i e = degree * e on k seeded points.

    For weight zero a passing field is also run through the bordered
    determinant; that report rides along as the companion.
    """
    names = tuple(sorted(free_vars(e), key=lambda s: (len(s), s)))
    n = len(names)
    pts = sample_points([box] * n, k, seed)
    records = []
    jets = []
    for x in pts:
        try:
            j = jet_eval(e, x, names)
        except EvalDomainError as err:
            records.append(PointRecord(tuple(map(float, x)), None, None, None, None, type(err).__name__))
            continue
        lhs = float(x @ j.grad)
        rhs = degree * j.value
        scale = float(np.abs(x * j.grad).sum() + abs(rhs))
        records.append(
            PointRecord(
                tuple(map(float, x)), j.value, lhs - rhs, scale,
                normalized(lhs - rhs, scale), "ok",
            )
        )
        jets.append(FieldJet.from_jet(x, j))
    euler = ResidualReport("euler", 1e-12, tuple(records))
    if degree == 0.0 and euler.passed and jets:
        companion = ResidualReport.from_jets("ufe", ufe_tolerance, jets, ufe_terms)
        euler = ResidualReport(euler.equation, euler.tolerance, euler.records, companion)
    return euler


# ---------------------------------------------------------------------------
# seeded generators for corpora

def random_coefficient_fn(rng: np.random.Generator, max_degree: int = 3, lo: float = -1.0, hi: float = 1.0) -> Expr:
    """Random polynomial in phi of degree <= max_degree, coefficients in [lo, hi]."""
    coeffs = rng.uniform(lo, hi, max_degree + 1)
    phi = var("phi")
    out: Expr = const(coeffs[0])
    for d, c in enumerate(coeffs[1:], start=1):
        out = add(out, mul(const(c), power(phi, const(float(d)))))
    return out
