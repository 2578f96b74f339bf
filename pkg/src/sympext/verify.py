"""Verification engine: turns a constructed map's postconditions into a
machine-checkable report.

Checks are evaluated on explicit grids with deterministic reduction order;
Jacobians come from dual lanes through the map, so no construction is
trusted without an independent numerical audit of its determinant, boundary
restriction and declared identity region.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import numkit as nk
from .mapfile import MapSamples
from .numkit import primal

__all__ = ["Check", "VerifyReport", "verify_map", "annulus_grid", "rect_grid",
           "samples_from_map", "verify_samples"]


@dataclass
class Check:
    name: str
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.error <= self.tol


@dataclass
class VerifyReport:
    grid: str
    checks: list = field(default_factory=list)
    wall_time: float = 0.0
    notes: list = field(default_factory=list)

    def add(self, name: str, error: float, tol: float):
        self.checks.append(Check(name, float(error), float(tol)))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self):
        out = [f"grid: {self.grid}"]
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            out.append(f"{status} {c.name}: error {c.error:.3e} (tol {c.tol:.1e})")
        for n in self.notes:
            out.append(f"note: {n}")
        out.append(f"wall time: {self.wall_time:.2f} s")
        return out

    def to_text(self) -> str:
        return "\n".join(self.lines()) + "\n"


def annulus_grid(r_lo: float, r_hi: float, n_r: int, n_phi: int):
    r = np.linspace(r_lo, r_hi, n_r)
    phi = np.linspace(0.0, 2.0 * np.pi, n_phi, endpoint=False)
    R, P = [g.ravel() for g in np.meshgrid(r, phi)]
    return R * np.cos(P), R * np.sin(P)


def rect_grid(bounds, counts, cell_centered: bool = True):
    axes = []
    for (lo, hi), n in zip(bounds, counts):
        if cell_centered:
            axes.append(lo + (hi - lo) * (np.arange(n) + 0.5) / n)
        else:
            axes.append(np.linspace(lo, hi, n))
    grids = np.meshgrid(*axes)
    return tuple(g.ravel() for g in grids)


def verify_map(eval_fn, grid_points, det_tol: float = 1e-6,
               boundary=None, boundary_tol: float = 1e-7,
               identity_points=None, grid_label: str = "",
               chunk: int = 2048) -> VerifyReport:
    """Audit a map: determinant on the grid, an optional boundary
    restriction against reference outputs, and exact identity at declared
    identity-region points.

    ``eval_fn(point_tuple) -> point_tuple`` must accept dual/array lanes.
    ``boundary`` is (input_points, expected_outputs).  Identity is checked
    for bitwise equality (the constructions short-circuit there).
    """
    t0 = time.perf_counter()
    report = VerifyReport(grid=grid_label or f"{len(grid_points[0])} points")
    n = len(grid_points)
    worst = 0.0
    total = len(np.asarray(grid_points[0]))
    for lo in range(0, total, chunk):
        sl = tuple(np.asarray(g)[lo:lo + chunk] for g in grid_points)
        det = primal(nk.jac_det(eval_fn, sl))
        worst = max(worst, float(np.max(np.abs(det - 1.0))))
    report.add("jacobian determinant vs 1", worst, det_tol)
    if boundary is not None:
        b_in, b_expect = boundary
        out = eval_fn(tuple(np.asarray(c) for c in b_in))
        err = 0.0
        for got, want in zip(out, b_expect):
            err = max(err, float(np.max(np.abs(primal(got) - np.asarray(want)))))
        report.add("boundary restriction", err, boundary_tol)
    if identity_points is not None:
        pts = tuple(np.asarray(c) for c in identity_points)
        out = eval_fn(pts)
        exact = all(np.array_equal(primal(o), p) for o, p in zip(out, pts))
        err = 0.0 if exact else max(
            float(np.max(np.abs(primal(o) - p))) for o, p in zip(out, pts))
        report.add("identity region (exact)", err, 0.0)
    report.wall_time = time.perf_counter() - t0
    return report


def samples_from_map(eval_fn, grid_points, chunk: int = 2048) -> MapSamples:
    """Evaluate map and determinant on a grid, packaged for a sample file."""
    dim = len(grid_points)
    total = len(np.asarray(grid_points[0]))
    outs = [[] for _ in range(dim)]
    dets = []
    for lo in range(0, total, chunk):
        sl = tuple(np.asarray(g)[lo:lo + chunk] for g in grid_points)
        out = eval_fn(sl)
        det = primal(nk.jac_det(eval_fn, sl))
        for i in range(dim):
            outs[i].append(np.asarray(primal(out[i]), dtype=float))
        dets.append(np.asarray(det, dtype=float))
    pin = np.column_stack([np.asarray(g, dtype=float) for g in grid_points])
    pout = np.column_stack([np.concatenate(o) for o in outs])
    return MapSamples(dim, pin, pout, np.concatenate(dets))


def verify_samples(samples: MapSamples, tol: float) -> VerifyReport:
    """Check the recorded determinants of a sample file against 1."""
    t0 = time.perf_counter()
    report = VerifyReport(grid=f"{len(samples)} recorded samples")
    err = float(np.max(np.abs(samples.dets - 1.0))) if len(samples) else 0.0
    report.add("recorded determinant vs 1", err, tol)
    report.wall_time = time.perf_counter() - t0
    return report
