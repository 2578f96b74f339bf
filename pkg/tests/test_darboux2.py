import numpy as np
import pytest

from sympext import darboux2 as dx, fndsl
from sympext import numkit as nk
from sympext.numkit import primal


def test_implicit_h_identity():
    p = fndsl.parse_field("x1", 2)
    h = dx.implicit_h(p, (0.0, 0.0), 0.5)
    xs = np.linspace(-0.4, 0.4, 9)
    assert np.max(np.abs(primal(h(xs, xs[::-1])) - xs)) <= 1e-12


def test_implicit_h_linear():
    p = fndsl.parse_field("2*x1", 2)
    h = dx.implicit_h(p, (0.0, 0.0), 0.5)
    assert float(primal(h(0.4, 0.1))) == pytest.approx(0.2, abs=1e-12)
    assert float(primal(h.h_x(0.4, 0.1))) == pytest.approx(0.5, abs=1e-12)


def test_implicit_h_residual():
    p = fndsl.parse_field("2*x1 + 0.3*sin(x1+x2)", 2)
    h = dx.implicit_h(p, (0.0, 0.0), 0.5)
    rng = np.random.default_rng(0)
    X = rng.uniform(-0.5, 0.5, 400)
    Y = rng.uniform(-0.5, 0.5, 400)
    hv = primal(h(X, Y))
    resid = primal(p.eval((hv, Y))) - X
    assert np.max(np.abs(resid)) <= 1e-10


def test_implicit_h_rejects_sign_violation():
    p = fndsl.parse_field("x1^3", 2)  # derivative vanishes at 0
    with pytest.raises(dx.DerivativeSignViolation):
        dx.implicit_h(p, (0.0, 0.0), 0.5)


def test_darboux_field_closed_form():
    p = fndsl.parse_field("2*x1", 2)
    h = dx.implicit_h(p, (0.0, 0.0), 0.5)
    field = dx.darboux_field(p, h, (0.0, 0.0))
    vs, vy = field.eval(0.5, (np.array([0.2]), np.array([0.3])))
    # v^y = (y - y0) / (2 (1 - t/2)) at t = 1/2, y = 0.3
    assert float(primal(vy)) == pytest.approx(0.2, abs=1e-12)
    assert float(primal(vs)) == 0.0


def test_darboux_normalize_identity():
    p = fndsl.parse_field("x1", 2)
    chart = dx.darboux_normalize(p, (0.0, 0.0))
    assert chart.box_halfwidth == 0.5
    assert chart.residuals["p_residual"] <= 1e-10
    assert chart.residuals["det_residual"] <= 1e-10


def test_darboux_normalize_linear():
    p = fndsl.parse_field("2*x1", 2)
    chart = dx.darboux_normalize(p, (0.0, 0.0))
    assert chart.residuals["p_residual"] <= 1e-8
    assert chart.residuals["det_residual"] <= 1e-8


def test_darboux_normalize_fixture():
    p = fndsl.parse_field("2*x1 + 0.3*sin(x1+x2)", 2)
    chart = dx.darboux_normalize(p, (0.0, 0.0))
    assert chart.box_halfwidth >= 0.05
    assert chart.residuals["p_residual"] <= 1e-6
    assert chart.residuals["det_residual"] <= 1e-6


def test_flow_preserves_first_coordinate():
    p = fndsl.parse_field("2*x1 + 0.3*sin(x1+x2)", 2)
    h = dx.implicit_h(p, (0.0, 0.0), 0.5, y_factor=5.6)
    field = dx.darboux_field(p, h, (0.0, 0.0))
    X = np.array([0.2, -0.1, 0.35])
    Y = np.array([0.1, 0.4, -0.3])
    for t_final in (0.25, 1.0):
        scaled = nk.TimeField(2, lambda t, z: tuple(t_final * c for c in field.fn(t_final * t, z)),
                              field.box)
        out = nk.flow_ode(scaled, (X, Y), 1e-12)
        assert np.max(np.abs(primal(out[0]) - X)) <= 1e-10


def test_flow_pullback_identity():
    # rho_1 carries the interpolated form back to the start: its determinant
    # equals 1/h_x at the image, not 1
    p = fndsl.parse_field("2*x1", 2)
    h = dx.implicit_h(p, (0.0, 0.0), 0.5, y_factor=5.0)
    field = dx.darboux_field(p, h, (0.0, 0.0))
    pts = (np.array([0.2, -0.1]), np.array([0.1, 0.3]))
    det = primal(nk.jac_det(lambda q: nk.flow_ode(field, q, 1e-12), pts))
    assert np.max(np.abs(det - 2.0)) <= 1e-7


def test_gradient_precondition_axis():
    p = fndsl.parse_field("3*x1", 2)
    M, pf, ang = dx.gradient_precondition(p, (0.0, 0.0))
    assert ang == pytest.approx(0.0)
    assert np.allclose(M, np.eye(2))


def test_gradient_precondition_vertical():
    p = fndsl.parse_field("x2", 2)
    M, pf, ang = dx.gradient_precondition(p, (0.0, 0.0))
    assert abs(abs(ang) - np.pi / 2) <= 1e-12
    assert float(primal(pf.partial(1, (0.0, 0.0)))) == pytest.approx(1.0, abs=1e-12)
    assert abs(np.linalg.det(M) - 1.0) <= 1e-14


def test_gradient_precondition_negative():
    p = fndsl.parse_field("-x1", 2)
    M, pf, ang = dx.gradient_precondition(p, (0.0, 0.0))
    assert abs(abs(ang) - np.pi) <= 1e-12
    assert float(primal(pf.partial(1, (0.0, 0.0)))) == pytest.approx(1.0, abs=1e-12)


def test_gradient_precondition_zero_gradient():
    p = fndsl.parse_field("x1^2 + x2^2", 2)
    with pytest.raises(dx.ZeroGradient):
        dx.gradient_precondition(p, (0.0, 0.0))
