import math

import numpy as np
import pytest

from implipde.errors import ArityError, NoRootError, SingularPointError
from implipde.expr import parse
from implipde.implicit import (
    Bracket,
    Guess,
    ImplicitFamily,
    field_jet,
    sample_grid,
    sample_points,
    solve_phi,
)

from conftest import fd_gradient, fd_hessian

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0  # positive root of x*phi^2 + t*phi = 1 at (1,1)


def test_solve_linear_in_phi():
    fam = ImplicitFamily(parse("x1*phi + x2*phi - 1"), 2, Bracket(0.0, 2.0))
    assert solve_phi(fam, (1.0, 1.0)) == pytest.approx(0.5, abs=1e-14)


def test_solve_quadratic_bracket():
    fam = ImplicitFamily(parse("x1*phi + x2*phi^2 - 1"), 2, Bracket(0.0, 1.0))
    assert solve_phi(fam, (1.0, 1.0)) == pytest.approx(GOLDEN, abs=1e-12)


def test_solve_from_guess():
    fam = ImplicitFamily(parse("x1*phi + x2*phi^2 - 1"), 2, Guess(0.4))
    assert solve_phi(fam, (1.0, 1.0)) == pytest.approx(GOLDEN, abs=1e-12)


def test_no_real_root():
    fam = ImplicitFamily(parse("phi^2 + 1"), 1, Bracket(-2.0, 2.0))
    with pytest.raises(NoRootError):
        solve_phi(fam, (0.3,))
    with pytest.raises(NoRootError):
        ImplicitFamily(parse("phi^2 + 1"), 1, Guess(0.5)).solve((0.3,))


def test_constraint_must_involve_phi():
    with pytest.raises(ArityError):
        ImplicitFamily(parse("x1 + x2"), 2)
    with pytest.raises(ArityError):
        ImplicitFamily(parse("phi*q - 1"), 1)


def test_field_jet_quadratic_example():
    # phi_t = -phi/(t + 2 x phi) with t + 2 x phi = sqrt(5) at (1,1)
    fam = ImplicitFamily(parse("x1*phi + x2*phi^2 - 1"), 2, Bracket(0.0, 1.0))
    j = field_jet(fam, (1.0, 1.0), GOLDEN)
    root5 = math.sqrt(5.0)
    assert j.grad[0] == pytest.approx(-GOLDEN / root5, abs=1e-7)
    assert j.grad[0] == pytest.approx(-0.2763932, abs=1e-7)
    assert j.grad[1] == pytest.approx(-(GOLDEN**2) / root5, abs=1e-7)
    assert j.grad[1] == pytest.approx(-0.1708204, abs=1e-7)


def test_field_jet_reciprocal():
    fam = ImplicitFamily(parse("x1*phi - 1"), 1, Bracket(0.0, 2.0))
    phi = solve_phi(fam, (2.0,))
    j = field_jet(fam, (2.0,), phi)
    assert phi == pytest.approx(0.5, abs=1e-14)
    assert j.grad[0] == pytest.approx(-0.25, abs=1e-12)
    assert j.hess[0, 0] == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize(
    "constraint,branch,x",
    [
        ("x1*phi + x2*phi^2 - 1", Bracket(0.0, 1.0), (1.3, 1.7)),
        ("x1*phi + x2*phi^3 - 1", Bracket(0.0, 2.0), (1.1, 1.9)),
        ("x1^2*phi + x2^2*(phi^2+1) + x1*x2*phi/2 - 1", Bracket(0.0, 6.0), (0.4, 0.3)),
        ("sin(phi)*x1 + x2*phi - 1", Bracket(0.0, 1.5), (1.2, 1.4)),
    ],
)
def test_jet_matches_finite_differences(constraint, branch, x):
    fam = ImplicitFamily(parse(constraint), 2, branch)
    x = np.asarray(x, dtype=float)
    phi = fam.solve(x)
    j = fam.field_jet(x, phi)

    def solved(p):
        return fam.solve(p, guess=phi)

    assert np.allclose(j.grad, fd_gradient(solved, x), rtol=1e-5, atol=1e-8)
    assert np.allclose(j.hess, fd_hessian(solved, x), rtol=1e-5, atol=1e-6)


def test_grid_solves_everywhere():
    fam = ImplicitFamily(parse("x1*phi + x2*phi - 1"), 2, Bracket(0.0, 2.0))
    results = sample_grid(fam, [(1.0, 2.0), (1.0, 2.0)], [5, 5], seed=0)
    assert len(results) == 25
    assert all(r.ok for r in results)
    assert max(r.jet.constraint_residual for r in results) <= 1e-12


def test_grid_determinism():
    fam = ImplicitFamily(parse("x1*phi + x2*phi^2 - 1"), 2, Bracket(0.0, 1.0))
    a = sample_grid(fam, [(1.0, 2.0), (1.0, 2.0)], [4, 4], seed=7)
    b = sample_grid(fam, [(1.0, 2.0), (1.0, 2.0)], [4, 4], seed=7)
    for ra, rb in zip(a, b):
        assert ra.index == rb.index
        assert ra.jet.phi == rb.jet.phi
        assert np.array_equal(ra.jet.grad, rb.jet.grad)


def test_grid_records_singular_points():
    # root branches of phi^2 + x1*phi + x2 = 0 merge on the discriminant locus
    # x1^2 = 4 x2; at any root (2 phi + x1)^2 equals the discriminant, so a
    # singular threshold of 0.5 flags exactly the points with disc < 0.25
    fam = ImplicitFamily(
        parse("phi^2 + x1*phi + x2"), 2, Bracket(-10.0, 0.0), singular_tol=0.5
    )
    results = sample_grid(fam, [(1.0, 3.0), (0.5, 1.5)], [9, 9], seed=0)
    kinds = {r.error for r in results if not r.ok}
    assert "SingularPointError" in kinds

    eps = 1e-9  # grid points landing exactly on the threshold may tip either way
    for r in results:
        x1, x2 = r.x
        disc = x1 * x1 - 4.0 * x2
        if r.error == "SingularPointError":
            assert 0.0 <= disc < 0.25 + eps
        elif r.ok:
            assert disc >= 0.25 - eps
        else:  # NoRootError: no real root, or a dip too shallow to bracket
            assert disc < 0.25


def test_branch_continuity_on_grid():
    fam = ImplicitFamily(parse("x1*phi + x2*phi^3 - 1"), 2, Bracket(0.0, 2.0))
    box = [(1.0, 2.0), (1.0, 2.0)]
    results = sample_grid(fam, box, [12, 12], seed=0)
    spacing = 1.0 / 11.0
    by_index = {r.index: r for r in results}
    for (i, k), r in by_index.items():
        for other in ((i + 1, k), (i, k + 1)):
            if other in by_index:
                o = by_index[other]
                local = max(np.max(np.abs(r.jet.grad)), np.max(np.abs(o.jet.grad)))
                assert abs(o.jet.phi - r.jet.phi) <= 10.0 * local * spacing


def test_singular_point_raised_at_fold():
    # at x1=0 the root of phi^2 - x1 has dC/dphi = 0
    fam = ImplicitFamily(parse("phi^2 - x1"), 1, Bracket(-1.0, 1.0))
    with pytest.raises(SingularPointError):
        fam.field_jet((0.0,), 0.0)


def test_sample_points_deterministic():
    a = sample_points([(0.0, 1.0), (2.0, 3.0)], 5, seed=42)
    b = sample_points([(0.0, 1.0), (2.0, 3.0)], 5, seed=42)
    assert np.array_equal(a, b)
    assert a.shape == (5, 2)
    assert (a[:, 0] >= 0).all() and (a[:, 0] <= 1).all()
    assert (a[:, 1] >= 2).all() and (a[:, 1] <= 3).all()
