"""Command-line surface.

Every construction subcommand verifies its output and prints the report;
nothing is returned unverified.  With ``--out`` the verification samples are
written as a delimited file and companion figures are rendered alongside
(``--no-figures`` suppresses them).  Exit codes: 0 success, 2 validation
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import circlext, cubeflow, darboux2, fndsl
from . import numkit as nk
from .mapfile import read_map_samples, write_map_samples
from .numkit import primal
from .verify import (VerifyReport, annulus_grid, rect_grid, samples_from_map,
                     verify_map, verify_samples)

__all__ = ["main", "run"]


def _parser():
    p = argparse.ArgumentParser(prog="sympext",
                                description="Constructive area-preserving maps "
                                            "with built-in verification")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for sampled verification points (default 0)")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("extend-circle",
                       help="extend a circle diffeomorphism to the plane")
    c.add_argument("--map", required=True, metavar="EXPR",
                   help="lift F(x) as an expression in x")
    c.add_argument("--method", choices=("gen", "moser"), required=True)
    c.add_argument("--eps", type=float, default=0.45,
                   help="cutoff radius for the generating-function method")
    c.add_argument("--grid", default="64x32",
                   help="annulus determinant grid, RADIALxANGULAR")
    c.add_argument("--out", metavar="FILE")
    c.add_argument("--no-figures", action="store_true")

    s = sub.add_parser("extend-square",
                       help="area-preserving ambient extension of a square map")
    s.add_argument("--phi1", required=True, metavar="EXPR,EXPR",
                   help="ambient diffeomorphism components in x,y")
    s.add_argument("--grid", default="32x32")
    s.add_argument("--out", metavar="FILE")
    s.add_argument("--no-figures", action="store_true")

    t = sub.add_parser("transport", help="cube density transport")
    t.add_argument("--h", required=True, metavar="EXPR")
    t.add_argument("--g", required=True, metavar="EXPR")
    t.add_argument("--dim", type=int, required=True)
    t.add_argument("--domain", choices=("unit", "double"), default="unit")
    t.add_argument("--out", metavar="FILE")
    t.add_argument("--no-figures", action="store_true")

    d = sub.add_parser("darboux", help="planar coordinate normalization chart")
    d.add_argument("--p", required=True, metavar="EXPR",
                   help="scalar function of x1, x2")
    d.add_argument("--at", required=True, metavar="X,Y")

    q = sub.add_parser("partition", help="balanced partition of a function")
    q.add_argument("--spec", required=True, metavar="FILE")

    v = sub.add_parser("verify", help="re-check a recorded sample file")
    v.add_argument("--in", dest="infile", required=True, metavar="FILE")
    v.add_argument("--tol", type=float, default=1e-6)
    v.add_argument("--figures", action="store_true")
    return p


def _emit(report: VerifyReport) -> int:
    for line in report.lines():
        print(line)
    return 0 if report.passed else 3


def _write_outputs(args, samples):
    if getattr(args, "out", None):
        write_map_samples(args.out, samples)
        print(f"samples: {args.out}")
        if not getattr(args, "no_figures", False):
            from .figures import render_sample_figures
            for path in render_sample_figures(samples, args.out):
                print(f"figure: {path}")


def _cmd_extend_circle(args) -> int:
    lift = circlext.make_lift(fndsl.parse(args.map, 1))
    if args.method == "moser":
        pmap = circlext.extend_circle_moser(lift)
    else:
        pmap = circlext.extend_circle_gen(lift, eps=args.eps)
    n_r, n_phi = (int(v) for v in args.grid.lower().split("x"))
    X, Y = annulus_grid(0.5, 2.0, n_r, n_phi)
    th = np.linspace(0.0, 1.0, 256, endpoint=False)
    Fx = primal(lift.F(th)) + pmap.rotation_offset
    boundary = ((np.cos(2 * np.pi * th), np.sin(2 * np.pi * th)),
                (np.cos(2 * np.pi * Fx), np.sin(2 * np.pi * Fx)))
    rng = np.random.default_rng(args.seed)
    r_id = min(0.3, 0.95 * pmap.r_inner) * np.sqrt(rng.uniform(0, 1, 100))
    a_id = rng.uniform(0, 2 * np.pi, 100)
    ident = (r_id * np.cos(a_id), r_id * np.sin(a_id)) \
        if pmap.rotation_offset % 1.0 == 0.0 else None
    fn = lambda p: pmap.eval(p[0], p[1])
    report = verify_map(fn, (X, Y), det_tol=1e-6, boundary=boundary,
                        boundary_tol=1e-7, identity_points=ident,
                        grid_label=f"annulus 0.5..2, {n_r}x{n_phi}")
    report.notes.append(f"identity disk radius {pmap.r_inner:.4f}, "
                        f"method {args.method}")
    code = _emit(report)
    _write_outputs(args, samples_from_map(fn, (X, Y)))
    return code


def _cmd_extend_square(args) -> int:
    parts = args.phi1.split(",")
    if len(parts) != 2:
        raise nk.ValidationError("--phi1 needs two comma-separated expressions")
    phi1 = cubeflow.map_from_fields([fndsl.parse_field(parts[0], 2),
                                     fndsl.parse_field(parts[1], 2)])
    psi = cubeflow.square_extension(phi1)
    nx, ny = (int(v) for v in args.grid.lower().split("x"))
    G = rect_grid(((0.0, 1.0), (0.0, 1.0)), (nx, ny))
    bx = np.linspace(0.0, 1.0, 64)
    b_in = (np.concatenate([bx, bx, np.zeros(64), np.ones(64)]),
            np.concatenate([np.zeros(64), np.ones(64), bx, bx]))
    expect = phi1.eval(b_in)
    report = verify_map(psi.fn, G, det_tol=1e-6,
                        boundary=(b_in, [primal(c) for c in expect]),
                        boundary_tol=1e-7,
                        grid_label=f"unit square, {nx}x{ny} cells")
    code = _emit(report)
    _write_outputs(args, samples_from_map(psi.fn, G))
    return code


def _cmd_transport(args) -> int:
    n = args.dim
    h = fndsl.parse_field(args.h, n)
    g = fndsl.parse_field(args.g, n)
    if args.domain == "unit":
        u = cubeflow.mose_transport(h, g, n)
        bounds = ((0.0, 1.0),) * n
        lam = 1.0
        fdens = h
    else:
        if n != 2:
            raise nk.ValidationError("double-domain transport is 2-d")
        u, lam = cubeflow.doublesquare_transport(h, g, n)
        bounds = ((-1.0, 1.0), (0.0, 1.0))
        fdens = h
    counts = (32,) * n if args.domain == "unit" else (32, 16)
    G = rect_grid(bounds, counts)
    report = VerifyReport(grid=f"{args.domain} cube, {'x'.join(map(str, counts))} cells")
    import time as _t
    t0 = _t.perf_counter()
    det = primal(nk.jac_det(u.fn, G))
    img = u.fn(G)
    if args.domain == "unit":
        # g(u) det(Du) = h
        lhs = primal(g.eval(tuple(primal(c) for c in img))) * det
        rhs = primal(h.eval(G))
    else:
        # det(Du) h(u) = lam * g
        lhs = det * primal(h.eval(tuple(primal(c) for c in img)))
        rhs = lam * primal(g.eval(G))
    report.add("pushforward identity", float(np.max(np.abs(lhs - rhs))), 1e-6)
    b_pts = _cube_boundary_points(bounds, 64)
    out = u.fn(b_pts)
    berr = max(float(np.max(np.abs(primal(o) - p))) for o, p in zip(out, b_pts))
    report.add("boundary identity", berr, 1e-8)
    report.wall_time = _t.perf_counter() - t0
    if args.domain == "double":
        report.notes.append(f"mass ratio lambda = {lam:.12g}")
    code = _emit(report)
    _write_outputs(args, samples_from_map(u.fn, G))
    return code


def _cube_boundary_points(bounds, per_face):
    n = len(bounds)
    rng = np.random.default_rng(12345)
    cols = [[] for _ in range(n)]
    for i in range(n):
        for v in bounds[i]:
            for k in range(n):
                if k == i:
                    cols[k].append(np.full(per_face, v))
                else:
                    lo, hi = bounds[k]
                    cols[k].append(rng.uniform(lo, hi, per_face))
    return tuple(np.concatenate(c) for c in cols)


def _cmd_darboux(args) -> int:
    p = fndsl.parse_field(args.p, 2)
    cx, cy = (float(v) for v in args.at.split(","))
    px = float(primal(p.partial(1, (cx, cy))))
    note = None
    if px <= 0.0:
        M, p, ang = darboux2.gradient_precondition(p, (cx, cy))
        u0 = np.linalg.solve(M, np.array([cx, cy]))
        cx, cy = float(u0[0]), float(u0[1])
        note = f"preconditioned by rotation of {ang:.6f} rad"
    chart = darboux2.darboux_normalize(p, (cx, cy))
    report = VerifyReport(grid="21x21 chart box")
    report.add("p o f vs x", chart.residuals["p_residual"], 1e-6)
    report.add("jacobian determinant vs 1", chart.residuals["det_residual"], 1e-6)
    report.notes.append(f"box halfwidth {chart.box_halfwidth}")
    if note:
        report.notes.append(note)
    return _emit(report)


def _cmd_partition(args) -> int:
    problem = _parse_partition_spec(args.spec)
    pieces, info = cubeflow.balanced_partition(problem)
    report = VerifyReport(grid=f"{len(pieces)} pieces")
    grid = np.linspace(problem.U[0][0], problem.U[0][1], 10000)
    total = sum(primal(pc((grid,))) for pc in pieces)
    gvals = primal(problem.g.eval((grid,)))
    report.add("sum of pieces vs g", float(np.max(np.abs(total - gvals))), 1e-12)
    worst = 0.0
    for pc in pieces:
        for box in (problem.U, problem.B):
            val = cubeflow._region_integral(
                lambda q: pc(q) * problem.tau.eval(q), box, problem.panels)
            worst = max(worst, abs(val))
    report.add("piece integrals over U and B", worst, 1e-7)
    report.notes.append(f"measured constant c = {info['c_measured']:.4f}; "
                        f"a-priori bound value {info['c_bound']:.1f}")
    return _emit(report)


def _parse_partition_spec(path):
    U = B = tau = g = None
    covers = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, rest = line.partition(" ")
            if key in ("U", "B", "cover"):
                vals = [float(v) for v in rest.split()]
                if len(vals) == 2:
                    box = ((vals[0], vals[1]),)
                elif len(vals) == 4:
                    box = ((vals[0], vals[1]), (vals[2], vals[3]))
                else:
                    raise nk.ValidationError(
                        f"{path}:{lineno}: boxes take 2 (1-d) or 4 (2-d) numbers")
                if key == "U":
                    U = box
                elif key == "B":
                    B = box
                else:
                    covers.append(box)
            elif key == "tau":
                tau = rest.strip()
            elif key == "g":
                g = rest.strip()
            else:
                raise nk.ValidationError(f"{path}:{lineno}: unknown key {key!r}")
    if U is None or B is None or tau is None or g is None or not covers:
        raise nk.ValidationError("partition spec needs U, B, tau, g and covers")
    dim = len(U)
    return cubeflow.PartitionProblem(dim=dim, U=U, B=B, covers=covers,
                                     tau=fndsl.parse_field(tau, dim),
                                     g=fndsl.parse_field(g, dim))


def _cmd_verify(args) -> int:
    samples = read_map_samples(args.infile)
    report = verify_samples(samples, args.tol)
    code = _emit(report)
    if args.figures:
        from .figures import render_sample_figures
        for path in render_sample_figures(samples, args.infile):
            print(f"figure: {path}")
    return code


_HANDLERS = {
    "extend-circle": _cmd_extend_circle,
    "extend-square": _cmd_extend_square,
    "transport": _cmd_transport,
    "darboux": _cmd_darboux,
    "partition": _cmd_partition,
    "verify": _cmd_verify,
}


def run(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return _HANDLERS[args.command](args)
    except nk.ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except nk.NumericsError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3


def main() -> None:
    raise SystemExit(run())
