"""Implicit solution fields: branch-aware root solving and exact jets.

A constraint C(x1..xn, phi) = 0 defines phi(x) on a branch.  solve() finds
phi at a point, field_jet() differentiates through the constraint to produce
the full first/second derivative set of phi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.optimize import brentq

from .errors import ArityError, NoRootError, SingularPointError
from .expr import Expr, compile_scalar, free_vars, sym_diff
from .jets import Jet2, jet_eval

__all__ = [
    "Bracket",
    "Guess",
    "ImplicitFamily",
    "FieldJet",
    "GridPointResult",
    "SampleSpec",
    "solve_phi",
    "field_jet",
    "sample_grid",
    "sample_points",
]

DEFAULT_ROOT_TOL = 1e-12
DEFAULT_SINGULAR_TOL = 1e-8


@dataclass(frozen=True)
class Bracket:
    """Search for a sign change in [lo, hi]; scan subdivides when the endpoints agree."""

    lo: float
    hi: float
    scan: int = 64


@dataclass(frozen=True)
class Guess:
    """Damped Newton iteration from phi0; grids continue from the neighboring solution."""

    phi0: float


@dataclass(frozen=True)
class FieldJet:
    """phi with its full first and second derivative set at one point."""

    x: np.ndarray
    phi: float
    grad: np.ndarray
    hess: np.ndarray
    constraint_residual: float = 0.0

    @property
    def n(self) -> int:
        return self.grad.shape[0]

    def compose(self, f0: float, f1: float, f2: float) -> "FieldJet":
        """Jet of h(phi) given (h, h', h'') at phi; used for covariance checks."""
        g = np.outer(self.grad, self.grad)
        return FieldJet(
            x=self.x,
            phi=f0,
            grad=f1 * self.grad,
            hess=f1 * self.hess + f2 * g,
            constraint_residual=self.constraint_residual,
        )

    @classmethod
    def from_jet(cls, x, j: Jet2) -> "FieldJet":
        """Wrap the jet of an explicit field."""
        return cls(np.asarray(x, dtype=float), j.value, j.grad.copy(), j.hess)


def canonical_vars(n: int) -> tuple[str, ...]:
    return tuple(f"x{i+1}" for i in range(n))


@dataclass(frozen=True)
class ImplicitFamily:
    """A constraint C(x, phi) = 0 together with a branch-selection policy."""

    constraint: Expr
    n: int
    branch: Union[Bracket, Guess] = Bracket(-6.0, 6.0)
    root_tol: float = DEFAULT_ROOT_TOL
    singular_tol: float = DEFAULT_SINGULAR_TOL

    def __post_init__(self):
        names = free_vars(self.constraint)
        allowed = set(canonical_vars(self.n)) | {"phi"}
        if "phi" not in names:
            raise ArityError("constraint must involve phi")
        extra = names - allowed
        if extra:
            raise ArityError(
                f"constraint uses variable '{sorted(extra)[0]}' outside x1..x{self.n}, phi"
            )

    @property
    def var_order(self) -> tuple[str, ...]:
        return canonical_vars(self.n) + ("phi",)

    def _compiled(self):
        # compile lazily; the family is immutable so this is safe to cache
        cache = getattr(self, "_fns", None)
        if cache is None:
            f = compile_scalar(self.constraint, self.var_order)
            fphi = compile_scalar(sym_diff(self.constraint, "phi"), self.var_order)
            cache = (f, fphi)
            object.__setattr__(self, "_fns", cache)
        return cache

    # -- root solving --------------------------------------------------------

    def solve(self, x, guess: Optional[float] = None) -> float:
        """Solve C(x, phi) = 0 for phi on the selected branch."""
        x = np.asarray(x, dtype=float)
        f, fphi = self._compiled()
        args = np.empty(self.n + 1)
        args[: self.n] = x

        def c(phi: float) -> float:
            args[self.n] = phi
            v = f(args)
            if not math.isfinite(v):
                raise ValueError("non-finite constraint value")
            return v

        def cphi(phi: float) -> float:
            args[self.n] = phi
            return fphi(args)

        if guess is not None:
            phi = self._newton(c, cphi, guess)
            if phi is None:
                phi = self._newton(c, cphi, guess, damped=True)
            if phi is None and isinstance(self.branch, Bracket):
                phi = self._bracket_solve(c, prefer=guess)
            if phi is None:
                raise NoRootError(f"iteration from guess {guess!r} did not converge at x={x.tolist()}")
        elif isinstance(self.branch, Guess):
            phi = self._newton(c, cphi, self.branch.phi0)
            if phi is None:
                phi = self._newton(c, cphi, self.branch.phi0, damped=True)
            if phi is None:
                raise NoRootError(f"iteration from guess {self.branch.phi0!r} did not converge at x={x.tolist()}")
        else:
            phi = self._bracket_solve(c)
            if phi is None:
                raise NoRootError(
                    f"no sign change in [{self.branch.lo}, {self.branch.hi}] at x={x.tolist()}"
                )

        phi = self._polish(c, cphi, phi)
        residual = abs(c(phi))
        if residual > self.root_tol:
            raise NoRootError(f"residual {residual:.3e} exceeds tolerance at x={x.tolist()}")
        if abs(cphi(phi)) < self.singular_tol:
            raise SingularPointError(
                f"|dC/dphi| = {abs(cphi(phi)):.3e} below threshold at x={x.tolist()}"
            )
        return phi

    def _newton(self, c, cphi, phi0: float, damped: bool = False, iters: int = 60):
        phi = float(phi0)
        try:
            v = c(phi)
        except Exception:
            return None
        for _ in range(iters):
            if abs(v) <= self.root_tol:
                return phi
            try:
                d = cphi(phi)
            except Exception:
                return None
            if d == 0.0 or not math.isfinite(d):
                return None
            step = -v / d
            if not math.isfinite(step):
                return None
            new_phi, new_v = phi + step, None
            for _ in range(20 if damped else 1):
                try:
                    new_v = c(new_phi)
                except Exception:
                    new_v = None
                if new_v is not None and (not damped or abs(new_v) < abs(v) or abs(step) < 1e-14):
                    break
                step *= 0.5
                new_phi = phi + step
            if new_v is None:
                return None
            phi, v = new_phi, new_v
        return phi if abs(v) <= self.root_tol else None

    def _bracket_solve(self, c, prefer: Optional[float] = None):
        assert isinstance(self.branch, Bracket)
        lo, hi = self.branch.lo, self.branch.hi
        cells = max(1, self.branch.scan)
        grid = np.linspace(lo, hi, cells + 1)
        values = []
        for g in grid:
            try:
                values.append(c(float(g)))
            except Exception:
                values.append(math.nan)
        intervals = []
        for a, b, va, vb in zip(grid[:-1], grid[1:], values[:-1], values[1:]):
            if math.isnan(va) or math.isnan(vb):
                continue
            if va == 0.0:
                intervals.append((a, a))
            elif va * vb < 0.0:
                intervals.append((a, b))
        if values and not math.isnan(values[-1]) and values[-1] == 0.0:
            intervals.append((grid[-1], grid[-1]))
        if not intervals:
            return None
        if prefer is None:
            a, b = intervals[0]
        else:
            a, b = min(intervals, key=lambda ab: abs(0.5 * (ab[0] + ab[1]) - prefer))
        if a == b:
            return float(a)
        return float(brentq(c, a, b, xtol=1e-14, rtol=8.9e-16, maxiter=200))

    def _polish(self, c, cphi, phi: float) -> float:
        # drive |C| to the rounding floor so downstream finite differences stay clean
        best_phi, best_v = phi, abs(c(phi))
        for _ in range(8):
            try:
                d = cphi(best_phi)
            except Exception:
                break
            if d == 0.0 or not math.isfinite(d):
                break
            cand = best_phi - c(best_phi) / d
            try:
                v = abs(c(cand))
            except Exception:
                break
            if not math.isfinite(cand) or v >= best_v:
                break
            best_phi, best_v = cand, v
        return best_phi

    # -- differentiation -----------------------------------------------------

    def field_jet(self, x, phi: float) -> FieldJet:
        """Exact phi derivatives at (x, phi) by implicit differentiation."""
        x = np.asarray(x, dtype=float)
        point = np.append(x, phi)
        j = jet_eval(self.constraint, point, self.var_order)
        n = self.n
        full = j.hess
        c_x = j.grad[:n]
        c_phi = j.grad[n]
        if abs(c_phi) < self.singular_tol:
            raise SingularPointError(f"|dC/dphi| = {abs(c_phi):.3e} below threshold")
        g = -c_x / c_phi
        c_xx = full[:n, :n]
        c_xphi = full[:n, n]
        c_phiphi = full[n, n]
        hess = np.empty((n, n))
        for p in range(n):
            for q in range(p, n):
                val = -(
                    c_xx[p, q]
                    + c_xphi[p] * g[q]
                    + c_xphi[q] * g[p]
                    + c_phiphi * g[p] * g[q]
                ) / c_phi
                hess[p, q] = val
                hess[q, p] = val
        return FieldJet(x, float(phi), g, hess, constraint_residual=abs(j.value))

    def jet_at(self, x, guess: Optional[float] = None) -> FieldJet:
        phi = self.solve(x, guess=guess)
        return self.field_jet(x, phi)


def solve_phi(fam: ImplicitFamily, x, guess: Optional[float] = None) -> float:
    return fam.solve(x, guess=guess)


def field_jet(fam: ImplicitFamily, x, phi: float) -> FieldJet:
    return fam.field_jet(x, phi)


@dataclass(frozen=True)
class GridPointResult:
    index: tuple[int, ...]
    x: np.ndarray
    jet: Optional[FieldJet]
    error: Optional[str]

    @property
    def ok(self) -> bool:
        return self.jet is not None


def _axis_values(lo: float, hi: float, count: int) -> np.ndarray:
    if count == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, count)


def sample_grid(fam: ImplicitFamily, box, counts, seed: int = 0) -> list[GridPointResult]:
    """Solve the family on a rectangular grid, in deterministic index order.

    Failed points are recorded with the error kind rather than dropped; the
    seed is part of the reproducibility stamp (grid coordinates themselves
    are deterministic).
    """
    box = [tuple(map(float, b)) for b in box]
    counts = [int(c) for c in counts]
    if len(box) != fam.n or len(counts) != fam.n:
        raise ValueError(f"box/counts must have length n={fam.n}")
    axes = [_axis_values(lo, hi, c) for (lo, hi), c in zip(box, counts)]
    results: list[GridPointResult] = []
    last_phi: Optional[float] = None
    for index in np.ndindex(*counts):
        x = np.array([axes[k][i] for k, i in enumerate(index)])
        try:
            phi = fam.solve(x, guess=last_phi)
            jet = fam.field_jet(x, phi)
            last_phi = phi
            results.append(GridPointResult(index, x, jet, None))
        except (NoRootError, SingularPointError) as err:
            results.append(GridPointResult(index, x, None, type(err).__name__))
    return results


def sample_points(box, count: int, seed: int) -> np.ndarray:
    """Seeded uniform points in a box, shape (count, len(box))."""
    rng = np.random.default_rng(seed)
    box = np.asarray(box, dtype=float)
    lo, hi = box[:, 0], box[:, 1]
    return lo + (hi - lo) * rng.random((count, box.shape[0]))


@dataclass(frozen=True)
class SampleSpec:
    """Where and how densely to sample a family."""

    box: tuple[tuple[float, float], ...]
    count: int
    seed: int = 0

    def draw(self) -> np.ndarray:
        return sample_points(self.box, self.count, self.seed)
