import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from implipde.errors import (
    EvalDomainError,
    ExprSyntaxError,
    UnboundVariableError,
    UnknownFunctionError,
)
from implipde.expr import (
    Bin,
    Const,
    Pow,
    Unary,
    Var,
    add,
    compile_scalar,
    div,
    evaluate,
    free_vars,
    mul,
    neg,
    parse,
    power,
    sub,
    sym_diff,
    to_string,
)

from conftest import central_diff, random_expr


def test_parse_free_vars():
    assert free_vars(parse("phi^2 + 3*x1")) == {"phi", "x1"}
    assert free_vars(parse("sin(phi)*x1 - 1")) == {"phi", "x1"}


def test_parse_syntax_error_offset():
    with pytest.raises(ExprSyntaxError) as exc:
        parse("x1 + * 2")
    assert exc.value.offset == 5


def test_parse_unknown_function():
    with pytest.raises(UnknownFunctionError):
        parse("foo(x1) + 2")


@pytest.mark.parametrize("bad", ["", "x1 +", "(x1", "x1 ! 2", "sin(x1", "1..2"])
def test_parse_rejects_malformed(bad):
    with pytest.raises(ExprSyntaxError):
        parse(bad)


def test_eval_golden_ratio_root():
    # quadratic-formula oracle: the positive root of phi^2 + phi - 1
    root = (math.sqrt(5.0) - 1.0) / 2.0
    assert evaluate(parse("phi^2+phi"), {"phi": root}) == pytest.approx(1.0, abs=1e-14)
    assert evaluate(parse("phi^2+phi"), {"phi": 0.618034}) == pytest.approx(1.0, abs=1e-6)


def test_eval_zero_and_errors():
    assert evaluate(parse("x1*x2"), {"x1": 0.0, "x2": 7.0}) == 0.0
    with pytest.raises(EvalDomainError):
        evaluate(parse("1/x1"), {"x1": 0.0})
    with pytest.raises(UnboundVariableError):
        evaluate(parse("x1+x2"), {"x1": 1.0})
    with pytest.raises(EvalDomainError):
        evaluate(parse("log(x1)"), {"x1": -1.0})
    with pytest.raises(EvalDomainError):
        evaluate(parse("sqrt(x1)"), {"x1": -4.0})
    with pytest.raises(EvalDomainError):
        evaluate(parse("exp(x1)"), {"x1": 1e9})
    with pytest.raises(EvalDomainError):
        evaluate(parse("x1^x2"), {"x1": -2.0, "x2": 0.5})


def test_sym_diff_power_rule():
    assert sym_diff(parse("phi^3"), "phi") == parse("3*phi^2")


def test_sym_diff_independence():
    assert sym_diff(parse("phi"), "x1") == Const(0.0)
    assert sym_diff(parse("sin(x1)*exp(x2)"), "phi") == Const(0.0)


def test_sym_diff_product_matches_fd():
    d = sym_diff(parse("sin(phi)*phi"), "phi")
    fd = central_diff(lambda t: evaluate(parse("sin(phi)*phi"), {"phi": t}), 0.3)
    assert abs(evaluate(d, {"phi": 0.3}) - fd) < 1e-8


def test_sym_diff_general_power():
    e = parse("x1^x2")
    d1 = sym_diff(e, "x1")
    d2 = sym_diff(e, "x2")
    b = {"x1": 1.7, "x2": 2.3}
    fd1 = central_diff(lambda t: evaluate(e, {"x1": t, "x2": 2.3}), 1.7)
    fd2 = central_diff(lambda t: evaluate(e, {"x1": 1.7, "x2": t}), 2.3)
    assert evaluate(d1, b) == pytest.approx(fd1, rel=1e-8)
    assert evaluate(d2, b) == pytest.approx(fd2, rel=1e-8)


def test_sym_diff_fd_agreement_corpus():
    # 200 seeded random polynomial/trig expressions, random points
    rng = np.random.default_rng(2024)
    names = ("x1", "x2", "phi")
    checked = 0
    for _ in range(200):
        e = random_expr(rng, names)
        name = names[rng.integers(3)]
        point = {k: float(rng.uniform(0.3, 1.2)) for k in names}
        d = sym_diff(e, name)
        try:
            got = evaluate(d, point)

            def f(t, _name=name):
                b = dict(point)
                b[_name] = t
                return evaluate(e, b)

            fd = central_diff(f, point[name])
        except EvalDomainError:
            continue
        assert abs(got - fd) <= 1e-6 * max(1.0, abs(fd)), to_string(e)
        checked += 1
    assert checked > 150


# -- round trips -------------------------------------------------------------

_leaf = st.one_of(
    st.sampled_from([Var("phi"), Var("x1"), Var("x2"), Var("t")]),
    st.floats(min_value=-5, max_value=5, allow_nan=False).map(lambda v: Const(round(v, 3))),
)


def _combine(children):
    a, b = children
    op = st.sampled_from(
        [add(a, b), sub(a, b), mul(a, b), div(a, b), neg(a),
         power(a, Const(2.0)), Unary("sin", a), Unary("exp", b)]
    )
    return op


_exprs = st.recursive(_leaf, lambda inner: st.tuples(inner, inner).flatmap(_combine), max_leaves=12)


@settings(max_examples=200, deadline=None)
@given(_exprs)
def test_print_parse_roundtrip(e):
    assert parse(to_string(e)) == e


@pytest.mark.parametrize(
    "text",
    [
        "1/x1/x2",
        "x1 - x2 - 2",
        "x1 - (x2 - 2)",
        "-x1^2",
        "(-x1)^2",
        "2^-3",
        "2^3^2",
        "x1*-3",
        "-(x1*x2)",
        "sin(x1)^2",
        "1e-07 + x1",
    ],
    ids=repr,
)
def test_roundtrip_on_sources(text):
    e = parse(text)
    assert parse(to_string(e)) == e


def test_nonassociative_parses():
    assert evaluate(parse("8/4/2"), {}) == 1.0
    assert evaluate(parse("8-4-2"), {}) == 2.0
    assert evaluate(parse("2^3^2"), {}) == 512.0
    assert evaluate(parse("-2^2"), {}) == -4.0


def test_constant_folding_preserves_values():
    rng = np.random.default_rng(5)
    for _ in range(50):
        e = random_expr(rng, ("x1", "x2"))
        raw = Bin("+", Bin("*", Const(1.0), e), Const(0.0))  # unfolded by hand
        folded = add(mul(Const(1.0), e), Const(0.0))
        b = {"x1": float(rng.uniform(0.3, 1.2)), "x2": float(rng.uniform(0.3, 1.2))}
        try:
            assert evaluate(raw, b) == evaluate(folded, b)
        except EvalDomainError:
            pass


def test_compile_scalar_matches_evaluate():
    rng = np.random.default_rng(6)
    for _ in range(50):
        e = random_expr(rng, ("x1", "x2"))
        f = compile_scalar(e, ("x1", "x2"))
        x = rng.uniform(0.3, 1.2, 2)
        try:
            expected = evaluate(e, {"x1": float(x[0]), "x2": float(x[1])})
        except EvalDomainError:
            continue
        assert f(x) == expected
