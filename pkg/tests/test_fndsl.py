import math

import numpy as np
import pytest

from sympext import fndsl
from sympext import numkit as nk
from sympext.fndsl import ArityExceeded, ExprSyntaxError, UnknownIdentifier
from sympext.numkit import primal


def test_parse_basic():
    e = fndsl.parse("x + 0.3*sin(2*pi*x)", 1)
    assert e.arity == 1
    assert e((0.25,)) == pytest.approx(0.25 + 0.3)


def test_precedence_power_binds_tighter():
    e = fndsl.parse("x*y^2", 2)
    assert e((3.0, 2.0)) == pytest.approx(12.0)


def test_power_right_associative():
    assert fndsl.parse("2^3^2", 1)((0.0,)) == pytest.approx(512.0)


def test_unary_minus_below_power():
    assert fndsl.parse("-x^2", 1)((3.0,)) == pytest.approx(-9.0)


def test_function_requires_parens():
    with pytest.raises(ExprSyntaxError):
        fndsl.parse("sin x", 1)


def test_double_unary_minus_rejected():
    with pytest.raises(ExprSyntaxError):
        fndsl.parse("--x", 1)


def test_syntax_error_offset():
    with pytest.raises(ExprSyntaxError) as err:
        fndsl.parse("x + @", 1)
    assert err.value.offset == 4


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier):
        fndsl.parse("foo(x)", 1)
    with pytest.raises(UnknownIdentifier):
        fndsl.parse("x + q", 1)


def test_arity_exceeded():
    with pytest.raises(ArityExceeded):
        fndsl.parse("x3", 2)
    with pytest.raises(ArityExceeded):
        fndsl.parse("z", 2)


def test_empty_expression():
    with pytest.raises(ExprSyntaxError):
        fndsl.parse("   ", 1)


def test_aliases_map_to_indices():
    e = fndsl.parse("x + 2*y + 3*z + 4*t", 4)
    assert e((1.0, 1.0, 1.0, 1.0)) == pytest.approx(10.0)


def test_partial_polynomial():
    f = fndsl.parse_field("x^2", 1)
    assert primal(f.partial(1, (3.0,))) == pytest.approx(6.0)


def test_partial_mixed():
    f = fndsl.parse_field("sin(x)*y", 2)
    assert primal(f.partial(2, (math.pi / 2, 5.0))) == pytest.approx(1.0)


def test_eval_domain_log():
    f = fndsl.parse_field("log(x)", 1)
    with pytest.raises(nk.EvalDomainError):
        f.eval((-1.0,))


def test_eval_domain_division():
    f = fndsl.parse_field("1/x", 1)
    with pytest.raises(nk.EvalDomainError):
        f.eval((0.0,))


def test_eval_domain_power():
    f = fndsl.parse_field("x^0.5", 1)
    with pytest.raises(nk.EvalDomainError):
        f.eval((-2.0,))


def _random_expr(rng, depth):
    if depth == 0 or rng.uniform() < 0.3:
        if rng.uniform() < 0.5:
            return f"{rng.uniform(-2, 2):.4f}"
        return "x"
    op = rng.choice(["+", "-", "*", "sin", "cos", "exp", "tanh", "atan"])
    if op in "+-*":
        return f"({_random_expr(rng, depth - 1)} {op} {_random_expr(rng, depth - 1)})"
    return f"{op}({_random_expr(rng, depth - 1)})"


def test_round_trip_pretty_print():
    rng = np.random.default_rng(7)
    pts = rng.uniform(-2.0, 2.0, 100)
    for _ in range(40):
        text = _random_expr(rng, 3)
        e1 = fndsl.parse(text, 1)
        e2 = fndsl.parse(fndsl.pretty(e1), 1)
        for x in pts[:25]:
            assert e1((x,)) == e2((x,))


def test_derivative_linearity_exact():
    f = fndsl.parse_field("2.5*(sin(x)*x) + 1.25*(x^3)", 1)
    g1 = fndsl.parse_field("sin(x)*x", 1)
    g2 = fndsl.parse_field("x^3", 1)
    xs = np.random.default_rng(11).uniform(-3, 3, 200)
    lhs = primal(f.partial(1, (xs,)))
    rhs = 2.5 * primal(g1.partial(1, (xs,))) + 1.25 * primal(g2.partial(1, (xs,)))
    assert np.array_equal(lhs, rhs)


def test_bit_identical_reevaluation():
    e = fndsl.parse("sin(x)*exp(x) - x^4/3", 1)
    xs = np.random.default_rng(2).uniform(-1, 1, 64)
    assert np.array_equal(e((xs,)), e((xs,)))


def test_ad_vs_fd_random_expressions():
    rng = np.random.default_rng(0)
    for _ in range(60):
        text = _random_expr(rng, 3)
        f = fndsl.to_field(fndsl.parse(text, 1))
        x = float(rng.uniform(-1.5, 1.5))
        ad = float(primal(f.partial(1, (x,))))
        h = 1e-5
        fd = (float(primal(f.eval((x + h,)))) - float(primal(f.eval((x - h,))))) / (2 * h)
        assert abs(ad - fd) <= 1e-7 * max(1.0, abs(ad))
