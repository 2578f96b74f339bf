import math

import numpy as np
import pytest

from sympext import fndsl
from sympext import numkit as nk
from sympext.numkit import Dual, primal


def test_integrate_constant():
    assert nk.integrate_1d(lambda t: 1.0, 0.0, 1.0, 1e-12) == pytest.approx(1.0, abs=1e-13)


def test_integrate_full_period_sine():
    val = nk.integrate_1d(lambda t: math.sin(2 * math.pi * t), 0.0, 1.0, 1e-12)
    assert abs(val) < 1e-13


def test_integrate_exponential():
    val = nk.integrate_1d(math.exp, 0.0, 1.0, 1e-12)
    assert val == pytest.approx(1.718281828459045, abs=1e-12)


def test_integrate_additive():
    f = lambda t: math.exp(-t * t) * math.sin(3 * t)
    tol = 1e-10
    left = nk.integrate_1d(f, -0.3, 0.4, tol)
    right = nk.integrate_1d(f, 0.4, 1.1, tol)
    whole = nk.integrate_1d(f, -0.3, 1.1, tol)
    assert abs(left + right - whole) <= 2 * tol


def test_integrate_rejects_bad_tol():
    with pytest.raises(ValueError):
        nk.integrate_1d(math.exp, 0.0, 1.0, 0.0)


def test_solve_monotone_identity():
    assert nk.solve_monotone(lambda y: y, 0.5, 0.0, 1.0) == pytest.approx(0.5, abs=1e-12)


def test_solve_monotone_cube():
    root = nk.solve_monotone(lambda y: y ** 3, 8.0, 0.0, 3.0)
    assert root == pytest.approx(2.0, abs=1e-10)


def test_solve_monotone_forward_check():
    f = lambda y: y + 0.1 * math.sin(2 * math.pi * y)
    root = nk.solve_monotone(f, 0.25, 0.0, 1.0, 1e-13)
    assert abs(f(root) - 0.25) <= 1e-13


def test_solve_monotone_no_bracket():
    with pytest.raises(nk.NoBracket):
        nk.solve_monotone(lambda y: y, 5.0, 0.0, 1.0)


def test_solve_monotone_detects_flip():
    with pytest.raises((nk.NonMonotone, nk.NoBracket)):
        nk.solve_monotone(lambda y: (y - 0.5) ** 2 - 0.26, -0.25, 0.0, 1.01)


def test_batch_solver_matches_scalar():
    f = lambda y: y + 0.1 * np.sin(2 * np.pi * y)
    targets = np.linspace(0.05, 0.95, 7)
    roots = nk.solve_monotone_batch(f, targets, np.full(7, -1.0), np.full(7, 2.0), 1e-13)
    assert np.max(np.abs(f(roots) - targets)) <= 1e-13


def test_flow_zero_field():
    field = nk.TimeField(2, lambda t, x: (0.0, 0.0))
    out = nk.flow_ode(field, (1.0, 2.0), 1e-10)
    assert out == (1.0, 2.0)


def test_flow_constant_field():
    field = nk.TimeField(2, lambda t, x: (1.0, 0.0))
    out = nk.flow_ode(field, (0.0, 0.0), 1e-12)
    assert primal(out[0]) == pytest.approx(1.0, abs=1e-12)
    assert primal(out[1]) == pytest.approx(0.0, abs=1e-14)


def test_flow_rotation_closed_form():
    H = fndsl.parse_field("(x^2+y^2)/2", 2)
    field = nk.hamiltonian_field(H)
    out = nk.flow_ode(field, (1.0, 0.0), 1e-12)
    assert abs(primal(out[0]) - math.cos(1.0)) <= 1e-10
    assert abs(primal(out[1]) + math.sin(1.0)) <= 1e-10


def test_flow_domain_escape():
    field = nk.TimeField(1, lambda t, x: (1.0,), box=[(-0.5, 0.5)])
    with pytest.raises(nk.DomainEscape):
        nk.flow_ode(field, (0.0,), 1e-10)


def test_hamiltonian_field_coordinates():
    H = fndsl.parse_field("(x^2+y^2)/2", 2)
    field = nk.hamiltonian_field(H)
    vx, vy = field.eval(0.0, (1.5, -0.25))
    assert primal(vx) == pytest.approx(-0.25)
    assert primal(vy) == pytest.approx(-1.5)
    Hc = fndsl.parse_field("x", 2)
    vx, vy = nk.hamiltonian_field(Hc).eval(0.0, (0.3, 0.4))
    assert primal(vx) == 0.0 and primal(vy) == -1.0


def test_flow_jacobian_det_through_integrator():
    # area preservation of a nonlinear autonomous flow, duals through RK
    H = fndsl.parse_field("(x^2+y^2)/2 + 0.1*x^2*y", 2)
    field = nk.hamiltonian_field(H)
    xs = np.linspace(-0.8, 0.8, 10)
    X, Y = [g.ravel() for g in np.meshgrid(xs, xs)]
    det = primal(nk.jac_det(lambda p: nk.flow_ode(field, p, 1e-12), (X, Y)))
    assert np.max(np.abs(det - 1.0)) <= 1e-8


def test_dual_vs_finite_differences():
    rng = np.random.default_rng(3)
    f = fndsl.parse_field("sin(2*x) * exp(cos(x)) + x^3/7", 1)
    for x in rng.uniform(-2.0, 2.0, 50):
        ad = primal(f.partial(1, (x,)))
        h = 1e-5
        fd = (primal(f.eval((x + h,))) - primal(f.eval((x - h,)))) / (2 * h)
        assert abs(ad - fd) <= 1e-7 * max(1.0, abs(ad))


def test_nested_duals_second_derivative():
    x = Dual(Dual(0.7, 1.0), 1.0)
    out = nk.sin(x)
    assert out.value.deriv == pytest.approx(math.cos(0.7))
    assert out.deriv.deriv == pytest.approx(-math.sin(0.7))


def test_integrate_to_dual_limit():
    b = Dual(np.array([0.4, 1.1]), np.ones(2))
    out = nk.integrate_to(nk.sin, 0.0, b, panels=8)
    assert np.max(np.abs(out.value - (1 - np.cos([0.4, 1.1])))) < 1e-13
    assert np.max(np.abs(out.deriv - np.sin([0.4, 1.1]))) < 1e-13


def test_cheb_proxy_certified():
    prox = nk.Cheb1D(lambda t: np.sin(3.0 * np.asarray(t)) + 2.0, 0.0, 1.0, tol=1e-12)
    xs = np.linspace(0.0, 1.0, 101)
    assert np.max(np.abs(prox.value(xs) - (np.sin(3 * xs) + 2))) < 1e-11
    anti = prox.integral(0.0, xs)
    ref = (np.cos(0.0) - np.cos(3 * xs)) / 3.0 + 2 * xs
    assert np.max(np.abs(primal(anti) - ref)) < 1e-11


def test_cumulative_cache_linear_extension():
    cache = nk.CumulativeCache(lambda t: 2.0 + 0.0 * np.asarray(t), 0.0, 1.0, panels=4)
    assert float(cache(1.5)) == pytest.approx(3.0, abs=1e-12)
    assert float(cache(-0.5)) == pytest.approx(-1.0, abs=1e-12)
