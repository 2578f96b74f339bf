"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines and timings.  Tolerances are pinned here, not configurable.
"""

import time

import numpy as np
import pytest

from sympext import bumps, circlext as cx, cubeflow as cf, darboux2 as dx, fndsl
from sympext import numkit as nk
from sympext.fndsl import ConstantField
from sympext.numkit import primal


def _report(name, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"{name}: {detail}"


def _annulus(n_r=128, n_phi=64):
    r = np.linspace(0.5, 2.0, n_r)
    phi = np.linspace(0.0, 2.0 * np.pi, n_phi, endpoint=False)
    R, P = [g.ravel() for g in np.meshgrid(r, phi)]
    return R * np.cos(P), R * np.sin(P)


def _circle_checks(pmap, lift):
    X, Y = _annulus()
    det_err = 0.0
    for lo in range(0, X.size, 2048):
        det = primal(pmap.det(X[lo:lo + 2048], Y[lo:lo + 2048]))
        det_err = max(det_err, float(np.max(np.abs(det - 1.0))))
    th = np.linspace(0.0, 1.0, 1024, endpoint=False)
    ox, oy = pmap.eval(np.cos(2 * np.pi * th), np.sin(2 * np.pi * th))
    Fx = primal(lift.F(th))
    restr = float(np.max(np.hypot(primal(ox) - np.cos(2 * np.pi * Fx),
                                  primal(oy) - np.sin(2 * np.pi * Fx))))
    rng = np.random.default_rng(0)
    r_id = 0.3 * np.sqrt(rng.uniform(0.0, 1.0, 100))
    a_id = rng.uniform(0.0, 2.0 * np.pi, 100)
    ix, iy = r_id * np.cos(a_id), r_id * np.sin(a_id)
    jx, jy = pmap.eval(ix, iy)
    ident_exact = np.array_equal(primal(jx), ix) and np.array_equal(primal(jy), iy)
    return det_err, restr, ident_exact


def test_criterion_1_moser_extension():
    t0 = time.perf_counter()
    lift = cx.make_lift(fndsl.parse("x + 0.3/(2*pi)*sin(2*pi*x)", 1))
    pmap = cx.extend_circle_moser(lift)
    det_err, restr, ident = _circle_checks(pmap, lift)
    elapsed = time.perf_counter() - t0
    ok = det_err <= 1e-6 and restr <= 1e-7 and ident and elapsed <= 60.0
    _report("criterion 1 (homotopy circle extension)", ok,
            f"det {det_err:.2e} (<=1e-6), restriction {restr:.2e} (<=1e-7), "
            f"identity exact: {ident}, {elapsed:.1f} s (<=60)")


def test_criterion_2_generating_function_extension():
    t0 = time.perf_counter()
    lift = cx.make_lift(fndsl.parse("x + 0.3/(2*pi)*sin(2*pi*x)", 1))
    eps = 0.45
    cmap = cx.gen_extension(lift, eps)
    gf = cmap.generating_function
    pmap = cx.cylinder_to_plane(cmap, 0.0)
    det_err, restr, ident = _circle_checks(pmap, lift)
    # S = x*y exactly beyond the cutoff
    rng = np.random.default_rng(1)
    xs = rng.uniform(0.0, 1.0, 64)
    ys = np.concatenate([rng.uniform(eps, 1.5, 32), rng.uniform(-1.5, -eps, 32)])
    s_exact = np.array_equal(primal(gf.S(xs, ys)), xs * ys)
    # inversion residual of the implicit solve
    s_in = rng.uniform(-0.44, 0.44, 256)
    th = rng.uniform(0.0, 1.0, 256)
    s_out, t_out = cmap.eval(s_in, th)
    resid = float(np.max(np.abs(primal(gf.S_x(th, primal(s_out))) - s_in)))
    elapsed = time.perf_counter() - t0
    ok = (det_err <= 1e-6 and restr <= 1e-7 and ident and s_exact
          and resid <= 1e-12 and elapsed <= 60.0)
    _report("criterion 2 (generating-function circle extension)", ok,
            f"det {det_err:.2e}, restriction {restr:.2e}, identity {ident}, "
            f"S=xy outside cutoff: {s_exact}, solve residual {resid:.2e} "
            f"(<=1e-12), {elapsed:.1f} s")


def test_criterion_3_subdivided_extension():
    t0 = time.perf_counter()
    lift = cx.make_lift(fndsl.parse("x + 0.8/(2*pi)*sin(2*pi*x)", 1))
    pieces = cx.subdivide_lift(lift, 0.25)
    norms = [p.a_norm(256) for p in pieces]
    xs = np.linspace(0.0, 1.0, 256, endpoint=False)
    comp = xs.copy()
    for p in pieces:
        comp = primal(p.F(comp))
    comp_err = float(np.max(np.abs(comp - primal(lift.F(xs)))))
    cmap = cx.compose_cylinder([cx.moser_extension(p) for p in pieces])
    pmap = cx.cylinder_to_plane(cmap, 0.0)
    det_err, restr, ident = _circle_checks(pmap, lift)
    elapsed = time.perf_counter() - t0
    ok = (len(pieces) >= 2 and max(norms) <= 0.25 and comp_err <= 1e-8
          and det_err <= 1e-6 and restr <= 1e-7 and ident)
    _report("criterion 3 (subdivided large circle map)", ok,
            f"{len(pieces)} pieces, max piece norm {max(norms):.3f} (<=0.25), "
            f"composition {comp_err:.2e} (<=1e-8), det {det_err:.2e}, "
            f"restriction {restr:.2e}, identity {ident}, {elapsed:.0f} s")


def test_criterion_4_beta_family():
    t0 = time.perf_counter()
    grid = [0.2, 0.5, 1.0, 2.0, 5.0]
    worst_int = 0.0
    min_val = np.inf
    plateaus_ok = True
    for a in grid:
        for b in grid:
            prof = bumps.beta2(a, b)
            plateaus_ok &= (float(primal(prof(0.0))) == a
                            and float(primal(prof(1.0))) == b)
            val = nk.integrate_1d(lambda t: float(primal(prof(t))), 0.0, 1.0, 1e-12)
            worst_int = max(worst_int, abs(val - 1.0))
            xs = np.linspace(0.0, 1.0, 4001)
            min_val = min(min_val, float(np.min(primal(prof(xs)))))
    ones = bumps.beta2(1.0, 1.0)
    xs = np.linspace(-0.2, 1.2, 2001)
    ones_exact = np.max(np.abs(np.asarray(primal(ones(xs))) - 1.0)) == 0.0
    tri = bumps.beta3(2.0, 3.0, 4.0)
    left = nk.integrate_1d(lambda t: float(primal(tri(t))), -1.0, 0.0, 1e-12)
    right = nk.integrate_1d(lambda t: float(primal(tri(t))), 0.0, 1.0, 1e-12)
    tri_ok = abs(left - 1.0) <= 1e-10 and abs(right - 1.0) <= 1e-10
    elapsed = time.perf_counter() - t0
    ok = (plateaus_ok and worst_int <= 1e-10 and min_val > 0.0 and ones_exact
          and tri_ok and elapsed <= 5.0)
    _report("criterion 4 (beta profile family)", ok,
            f"plateaus exact: {plateaus_ok}, worst unit-integral error "
            f"{worst_int:.2e} (<=1e-10), min value {min_val:.3f} (>0), "
            f"identity case exact: {ones_exact}, glued integrals: {tri_ok}, "
            f"{elapsed:.1f} s (<=5)")


def test_criterion_5_mose_transport():
    t0 = time.perf_counter()
    h1 = fndsl.parse_field("1 + 0.5*sin(2*pi*x)", 1)
    u1 = cf.mose_transport(h1, ConstantField(1.0, 1), 1)
    xs = np.linspace(0.0, 1.0, 257)
    oracle = xs + (1 - np.cos(2 * np.pi * xs)) / (4 * np.pi)
    err1 = float(np.max(np.abs(primal(u1.eval((xs,))[0]) - oracle)))

    h2 = fndsl.parse_field("(1 + 0.4*sin(2*pi*x))*(1 + 0.4*cos(2*pi*y))", 2)
    u2 = cf.mose_transport(h2, ConstantField(1.0, 2), 2, check_boundary=False)
    X, Y = [g.ravel() for g in np.meshgrid(np.linspace(0, 1, 17),
                                           np.linspace(0, 1, 17))]
    o1 = X + 0.4 * (1 - np.cos(2 * np.pi * X)) / (2 * np.pi)
    o2 = Y + 0.4 * np.sin(2 * np.pi * Y) / (2 * np.pi)
    g1, g2 = u2.eval((X, Y))
    err2 = float(max(np.max(np.abs(primal(g1) - o1)), np.max(np.abs(primal(g2) - o2))))

    gx = (np.arange(32) + 0.5) / 32
    GX, GY = [g.ravel() for g in np.meshgrid(gx, gx)]
    det = primal(nk.jac_det(u2.fn, (GX, GY)))
    push = float(np.max(np.abs(det * 1.0 - primal(h2.eval((GX, GY))))))
    elapsed = time.perf_counter() - t0
    ok = err1 <= 1e-9 and err2 <= 1e-8 and push <= 1e-7
    _report("criterion 5 (triangular transport)", ok,
            f"1-d oracle {err1:.2e} (<=1e-9), 2-d oracle {err2:.2e} (<=1e-8), "
            f"pushforward {push:.2e} (<=1e-7) on 32x32, {elapsed:.0f} s")


def test_criterion_6_double_cube_transport():
    t0 = time.perf_counter()
    f = fndsl.parse_field("1 + 0.2*sin(pi*x)^2*sin(pi*y)^2", 2)
    g = ConstantField(1.0, 2)
    u, lam = cf.doublesquare_transport(f, g, 2)
    gx = (np.arange(32) + 0.5) / 16 - 1.0
    gy = (np.arange(16) + 0.5) / 16
    GX, GY = [a.ravel() for a in np.meshgrid(gx, gy)]
    det = primal(nk.jac_det(u.fn, (GX, GY)))
    img = u.eval((GX, GY))
    push = float(np.max(np.abs(det * primal(f.eval((primal(img[0]), primal(img[1]))))
                               - lam)))
    bx = np.linspace(-1, 1, 65)
    by = np.linspace(0, 1, 33)
    berr = 0.0
    for q in [(bx, np.zeros(65)), (bx, np.ones(65)), (np.full(33, -1.0), by),
              (np.full(33, 1.0), by), (np.zeros(33), by)]:
        o1, o2 = u.eval(q)
        berr = max(berr, float(np.max(np.abs(primal(o1) - q[0]))),
                   float(np.max(np.abs(primal(o2) - q[1]))))
    elapsed = time.perf_counter() - t0
    ok = abs(lam - 1.05) <= 1e-9 and push <= 1e-6 and berr <= 1e-8
    _report("criterion 6 (double-cube transport)", ok,
            f"lambda {lam:.10f} (expected 1.05), pushforward vs lambda*g "
            f"{push:.2e} (<=1e-6) on 32x16 cells, extended-boundary identity "
            f"{berr:.2e} (<=1e-8), {elapsed:.0f} s")


def _polygon_area_mc(psi, rect, n_points=100000, seed=0):
    (x0, x1), (y0, y1) = rect
    from matplotlib.path import Path
    t = np.linspace(0.0, 1.0, 1024, endpoint=False)
    edges = [
        (x0 + (x1 - x0) * t, np.full_like(t, y0)),
        (np.full_like(t, x1), y0 + (y1 - y0) * t),
        (x1 - (x1 - x0) * t, np.full_like(t, y1)),
        (np.full_like(t, x0), y1 - (y1 - y0) * t),
    ]
    bx = np.concatenate([e[0] for e in edges])
    by = np.concatenate([e[1] for e in edges])
    ox, oy = psi.fn((bx, by))
    poly = np.column_stack([primal(ox), primal(oy)])
    path = Path(poly)
    lo = poly.min(axis=0) - 1e-6
    hi = poly.max(axis=0) + 1e-6
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(n_points, 2))
    frac = np.count_nonzero(path.contains_points(pts)) / n_points
    return frac * np.prod(hi - lo)


def test_criterion_7_square_pipeline():
    t0 = time.perf_counter()
    phi1 = cf.map_from_fields([fndsl.parse_field("x + 0.2*sin(pi*x)^2", 2),
                               fndsl.parse_field("y", 2)])
    psi = cf.square_extension(phi1)
    bx = np.linspace(0.0, 1.0, 256)
    berr = 0.0
    for q in [(bx, np.zeros(256)), (bx, np.ones(256)),
              (np.zeros(256), bx), (np.ones(256), bx)]:
        got = psi.eval(q)
        want = phi1.eval(q)
        berr = max(berr, float(np.max(np.abs(primal(got[0]) - primal(want[0])))),
                   float(np.max(np.abs(primal(got[1]) - primal(want[1])))))
    gx = (np.arange(64) + 0.5) / 64
    GX, GY = [a.ravel() for a in np.meshgrid(gx, gx)]
    det_err = 0.0
    for lo in range(0, GX.size, 1024):
        det = primal(nk.jac_det(psi.fn, (GX[lo:lo + 1024], GY[lo:lo + 1024])))
        det_err = max(det_err, float(np.max(np.abs(det - 1.0))))
    rng = np.random.default_rng(0)
    area_err = 0.0
    for _ in range(5):
        xs = np.sort(rng.uniform(0.0, 1.0, 2))
        ys = np.sort(rng.uniform(0.0, 1.0, 2))
        if xs[1] - xs[0] < 0.1:
            xs[1] = min(1.0, xs[0] + 0.1)
        if ys[1] - ys[0] < 0.1:
            ys[1] = min(1.0, ys[0] + 0.1)
        rect = ((xs[0], xs[1]), (ys[0], ys[1]))
        area = (xs[1] - xs[0]) * (ys[1] - ys[0])
        mc = _polygon_area_mc(psi, rect, seed=0)
        area_err = max(area_err, abs(mc - area) / area)
    elapsed = time.perf_counter() - t0
    ok = berr <= 1e-7 and det_err <= 1e-6 and area_err <= 0.01
    _report("criterion 7 (square-boundary extension)", ok,
            f"boundary restriction {berr:.2e} (<=1e-7), det {det_err:.2e} "
            f"(<=1e-6) on 64x64, Monte Carlo area error {100 * area_err:.3f}% "
            f"(<=1%), {elapsed:.0f} s")


def test_criterion_8_darboux_chart():
    t0 = time.perf_counter()
    p = fndsl.parse_field("2*x1 + 0.3*sin(x1+x2)", 2)
    chart = dx.darboux_normalize(p, (0.0, 0.0))
    p_res = chart.residuals["p_residual"]
    d_res = chart.residuals["det_residual"]
    ident = dx.darboux_normalize(fndsl.parse_field("x1", 2), (0.0, 0.0))
    xs = np.linspace(-0.4, 0.4, 9)
    fx, fy = ident.eval(xs, xs[::-1])
    id_err = float(max(np.max(np.abs(primal(fx) - xs)),
                       np.max(np.abs(primal(fy) - xs[::-1]))))
    elapsed = time.perf_counter() - t0
    ok = p_res <= 1e-6 and d_res <= 1e-6 and id_err <= 1e-10
    _report("criterion 8 (planar coordinate chart)", ok,
            f"p-residual {p_res:.2e} (<=1e-6), det residual {d_res:.2e} "
            f"(<=1e-6), box {chart.box_halfwidth}, identity case {id_err:.2e}, "
            f"{elapsed:.0f} s")


def test_criterion_9_balanced_partition():
    t0 = time.perf_counter()
    b = bumps.plateau_bump((2.2, 2.8), 0.6)
    psi1 = bumps.plateau_bump((1.9, 2.1), 0.15)
    psi2 = bumps.plateau_bump((3.5, 3.65), 0.1)
    int_B_g0 = float(primal(b(3.0))) - float(primal(b(1.0)))
    m1 = nk.integrate_1d(lambda t: float(primal(psi1(t))), 1.5, 2.5, 1e-12)
    m2 = nk.integrate_1d(lambda t: float(primal(psi2(t))), 3.3, 3.9, 1e-12)
    c1 = int_B_g0 / m1
    c2 = -c1 * m1 / m2
    g = fndsl.CallableField(
        lambda q: b.deriv(q[0]) - c1 * psi1(q[0]) - c2 * psi2(q[0]), 1)
    problem = cf.PartitionProblem(
        dim=1, U=((0.0, 4.0),), B=((1.0, 3.0),),
        covers=[((0.5, 2.5),), ((0.7, 3.5),), ((2.5, 3.9),)],
        tau=ConstantField(1.0, 1), g=g)
    pieces, info = cf.balanced_partition(problem)
    xs = np.linspace(0.0, 4.0, 10000)
    recon = float(np.max(np.abs(sum(primal(pc((xs,))) for pc in pieces)
                                - primal(g.eval((xs,))))))
    ints = [abs(info["int_U"]), abs(info["int_B"])]
    for pc in pieces:
        for box in (problem.U, problem.B):
            ints.append(abs(cf._region_integral(
                lambda q, pc=pc: pc(q) * problem.tau.eval(q), box, problem.panels)))
    supp_exact = True
    for pc, cov in zip(pieces, problem.covers):
        lo, hi = cov[0]
        outside = xs[(xs < lo) | (xs > hi)]
        supp_exact &= float(np.max(np.abs(primal(pc((outside,)))))) == 0.0
    elapsed = time.perf_counter() - t0
    ok = recon <= 1e-12 and max(ints) <= 1e-7 and supp_exact
    _report("criterion 9 (balanced partition)", ok,
            f"reconstruction {recon:.2e} (<=1e-12) at 10^4 points, "
            f"{len(ints)} integral constraints worst {max(ints):.2e} (<=1e-7), "
            f"supports exact: {supp_exact}, measured c {info['c_measured']:.3f} "
            f"vs bound value {info['c_bound']:.0f}, {elapsed:.0f} s")


def _random_expr(rng, depth):
    if depth == 0 or rng.uniform() < 0.3:
        if rng.uniform() < 0.5:
            return f"{rng.uniform(-2, 2):.4f}"
        return "x"
    op = rng.choice(["+", "-", "*", "sin", "cos", "exp", "tanh", "atan"])
    if op in "+-*":
        return f"({_random_expr(rng, depth - 1)} {op} {_random_expr(rng, depth - 1)})"
    return f"{op}({_random_expr(rng, depth - 1)})"


def test_criterion_10_numeric_substrate():
    t0 = time.perf_counter()
    H = fndsl.parse_field("(x^2+y^2)/2", 2)
    field = nk.hamiltonian_field(H)
    out = nk.flow_ode(field, (1.0, 0.0), 1e-12)
    rot_err = float(np.hypot(primal(out[0]) - np.cos(1.0),
                             primal(out[1]) + np.sin(1.0)))
    xs = np.linspace(-0.8, 0.8, 10)
    X, Y = [g.ravel() for g in np.meshgrid(xs, xs)]
    det = primal(nk.jac_det(lambda p: nk.flow_ode(field, p, 1e-12), (X, Y)))
    det_err = float(np.max(np.abs(det - 1.0)))
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        f = fndsl.to_field(fndsl.parse(_random_expr(rng, 3), 1))
        x = float(rng.uniform(-1.5, 1.5))
        ad = float(primal(f.partial(1, (x,))))
        h = 1e-5
        fd = (float(primal(f.eval((x + h,)))) - float(primal(f.eval((x - h,))))) / (2 * h)
        worst = max(worst, abs(ad - fd) / max(1.0, abs(ad)))
    elapsed = time.perf_counter() - t0
    ok = rot_err <= 1e-9 and det_err <= 1e-8 and worst <= 1e-7
    _report("criterion 10 (numeric substrate)", ok,
            f"rotation endpoint {rot_err:.2e} (<=1e-9), flow det {det_err:.2e} "
            f"(<=1e-8), AD vs FD worst {worst:.2e} (<=1e-7) over 1000 "
            f"expressions, {elapsed:.0f} s")
