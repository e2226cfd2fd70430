import numpy as np
import pytest

from implipde.errors import EvalDomainError
from implipde.expr import evaluate, parse, sym_diff
from implipde.jets import Jet2, jet_eval, lift

from conftest import fd_gradient, fd_hessian, random_expr


def test_lift_seeds():
    j = lift((2.0, 3.0), 0)
    assert j.value == 2.0
    assert np.array_equal(j.grad, [1.0, 0.0])
    assert not j.hess_upper.any()
    j = lift((2.0, 3.0), 1)
    assert j.value == 3.0
    assert np.array_equal(j.grad, [0.0, 1.0])


def test_lift_out_of_range():
    with pytest.raises(IndexError):
        lift((1.0, 2.0), 2)


def test_constant_jet():
    j = jet_eval(parse("7"), (1.0, 2.0), ("x1", "x2"))
    assert j.value == 7.0
    assert not j.grad.any() and not j.hess_upper.any()


def test_bilinear():
    j = jet_eval(parse("x1*x2"), (2.0, 3.0), ("x1", "x2"))
    assert j.value == 6.0
    assert np.array_equal(j.grad, [3.0, 2.0])
    assert np.array_equal(j.hess, [[0.0, 1.0], [1.0, 0.0]])


def test_quadratic():
    j = jet_eval(parse("x1^2"), (5.0,), ("x1",))
    assert (j.value, j.grad[0], j.hess[0, 0]) == (25.0, 10.0, 2.0)


def test_sin_exp_matches_fd():
    e = parse("sin(x1)*exp(x2)")
    x = np.array([0.4, 0.2])
    j = jet_eval(e, x, ("x1", "x2"))

    def f(p):
        return evaluate(e, {"x1": float(p[0]), "x2": float(p[1])})

    assert np.allclose(j.grad, fd_gradient(f, x), rtol=1e-6, atol=1e-6)
    assert np.allclose(j.hess, fd_hessian(f, x), rtol=1e-6, atol=1e-5)


def test_hessian_symmetric_bitwise():
    rng = np.random.default_rng(11)
    names = ("x1", "x2", "phi")
    for _ in range(100):
        e = random_expr(rng, names, depth=4)
        x = rng.uniform(0.3, 1.2, 3)
        try:
            h = jet_eval(e, x, names).hess
        except EvalDomainError:
            continue
        assert np.array_equal(h, h.T)


def test_gradient_agrees_with_symbolic_path():
    # two independent differentiation routes within 1e-10 relative
    rng = np.random.default_rng(12)
    names = ("x1", "x2")
    checked = 0
    for _ in range(200):
        e = random_expr(rng, names)
        x = rng.uniform(0.3, 1.2, 2)
        bindings = {"x1": float(x[0]), "x2": float(x[1])}
        try:
            j = jet_eval(e, x, names)
            sym = np.array([evaluate(sym_diff(e, n), bindings) for n in names])
        except EvalDomainError:
            continue
        assert np.allclose(j.grad, sym, rtol=1e-10, atol=1e-12)
        checked += 1
    assert checked > 150


def test_params_held_constant():
    j = jet_eval(parse("phi*x1^2"), (3.0,), ("x1",), params={"phi": 2.0})
    assert j.value == 18.0
    assert j.grad[0] == 12.0
    assert j.hess[0, 0] == 4.0


def test_division_and_pow_domain():
    with pytest.raises(EvalDomainError):
        jet_eval(parse("1/x1"), (0.0,), ("x1",))
    with pytest.raises(EvalDomainError):
        jet_eval(parse("x1^0.5"), (-1.0,), ("x1",))
    with pytest.raises(EvalDomainError):
        jet_eval(parse("log(x1)"), (-1.0,), ("x1",))


def test_general_power_jet():
    e = parse("x1^x2")
    x = np.array([1.7, 2.3])
    j = jet_eval(e, x, ("x1", "x2"))

    def f(p):
        return evaluate(e, {"x1": float(p[0]), "x2": float(p[1])})

    assert np.allclose(j.grad, fd_gradient(f, x), rtol=1e-6)
    assert np.allclose(j.hess, fd_hessian(f, x), rtol=1e-5, atol=1e-6)


def test_jet_arithmetic_with_scalars():
    a = lift((2.0,), 0)
    assert (1.0 + a - 3.0).value == 0.0
    assert (2.0 * a).grad[0] == 2.0
    assert (1.0 / a).value == 0.5
    assert (a**3).grad[0] == 12.0
    r = 1.0 / a
    assert r.hess[0, 0] == pytest.approx(2.0 / 8.0)
