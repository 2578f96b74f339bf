"""Planar normalization of a coordinate function: given p with dp/dx > 0
near a point, build a local area-preserving map f with p o f = x.

The chart is g o rho_1 where g = (h(x, y), y) inverts p in its first slot
and rho_1 is the time-1 flow of the field that restores the area form along
the interpolation of pullbacks; the field has no x-component, so the flow
preserves the first coordinate and p o f = x survives the area correction.
"""

from __future__ import annotations

import numpy as np

from . import numkit as nk
from .fndsl import CallableField
from .numkit import Dual, primal

__all__ = [
    "DerivativeSignViolation", "BracketExpansionFailed", "ShrinkExhausted",
    "ZeroGradient", "DarbouxChart", "implicit_h", "darboux_field",
    "darboux_normalize", "gradient_precondition",
]


class DerivativeSignViolation(nk.ValidationError):
    pass


class BracketExpansionFailed(nk.NumericsError):
    pass


class ShrinkExhausted(nk.NumericsError):
    pass


class ZeroGradient(nk.ValidationError):
    pass


class ImplicitH:
    """Evaluator for h with p(h(x, y), y) = x on a box around the center.

    Partials come from implicit differentiation: h_x = 1/p_x(h, y) and
    h_y = -p_y(h, y)/p_x(h, y); duals ride through a Newton polish.
    """

    def __init__(self, p, center, halfwidth: float, y_factor: float = 2.0):
        self.p = p
        self.center = center
        self.halfwidth = halfwidth
        self.y_margin = y_factor * halfwidth
        cx, cy = center
        margin = 2.0 * halfwidth
        xs = np.linspace(cx - margin, cx + margin, 21)
        ys = np.linspace(cy - self.y_margin, cy + self.y_margin, 21)
        X, Y = [g.ravel() for g in np.meshgrid(xs, ys)]
        px = primal(p.partial(1, (X, Y)))
        if np.min(px) <= 0.0:
            raise DerivativeSignViolation(
                f"dp/dx reaches {np.min(px):.3e} on the sampled box")
        # the flow's y-amplification is bounded by max p_x (= 1/min h_x)
        self.px_max = float(np.max(px))

    def __call__(self, x, y):
        xv = np.asarray(primal(x), dtype=float)
        yv = np.asarray(primal(y), dtype=float)
        xv, yv = np.broadcast_arrays(xv, yv)
        fwd = lambda u: np.asarray(primal(self.p.eval((u, yv))), dtype=float)
        slope_at = lambda u: np.asarray(primal(self.p.partial(1, (u, yv))),
                                        dtype=float)
        # warm Newton from the center slope; safeguarded fallback on stall
        sol = self.center[0] + (xv - fwd(np.full_like(xv, self.center[0]))) \
            / self.px_max
        ok = False
        for _ in range(30):
            r = fwd(sol) - xv
            if np.max(np.abs(r)) <= 1e-12:
                ok = True
                break
            sol = sol - r / slope_at(sol)
        if not ok:
            cx = self.center[0]
            half = max(self.halfwidth, 1.0)
            lo = np.full_like(xv, cx - half)
            hi = np.full_like(xv, cx + half)
            for _ in range(40):  # expand until the bracket straddles
                if np.all(fwd(lo) <= xv) and np.all(fwd(hi) >= xv):
                    break
                lo = lo - half
                hi = hi + half
            else:
                raise BracketExpansionFailed("could not bracket the implicit solve")
            sol = nk.solve_monotone_batch(fwd, xv, lo, hi, 1e-12)
        if isinstance(x, Dual) or isinstance(y, Dual):
            res = self.p.eval((sol, y)) - x
            return sol - res / slope_at(sol)
        return sol

    def h_x(self, x, y):
        h = self(x, y)
        return 1.0 / self.p.partial(1, (h, y))

    def h_y(self, x, y):
        h = self(x, y)
        px = self.p.partial(1, (h, y))
        py = self.p.partial(2, (h, y))
        return -py / px


def implicit_h(p, center, halfwidth: float = 0.5,
               y_factor: float = 2.0) -> ImplicitH:
    """Solve p(h, y) = x for h on a box around ``center`` (margin x2 in x,
    ``y_factor`` x halfwidth in y to cover the flow's range)."""
    return ImplicitH(p, tuple(center), halfwidth, y_factor)


def darboux_field(p, h: ImplicitH, center) -> nk.TimeField:
    """Area-correcting field: no x-component, and

        v^y(t, x, y) = -k_x(x, y) / (1 - t + t h_x(x, y))

    with k_x = int_{y0}^{y} (h_x(x, eta) - 1) d eta, y0 the center ordinate
    (so the field vanishes on the center line and the flow stays local).
    """
    y0 = float(center[1])

    def k_x(x, y):
        def igr(eta):
            xe = _match(x, eta)
            return h.h_x(xe, eta) - 1.0
        return nk.integrate_to(igr, y0, y, panels=4)

    cx, cy = h.center
    mx = 2.0 * h.halfwidth
    my = h.y_margin
    box = [(cx - mx, cx + mx), (cy - my, cy + my)]

    def fn(t, z):
        x, y = z
        denom = (1.0 - t) + t * h.h_x(x, y)
        return (0.0, -k_x(x, y) / denom)

    return nk.TimeField(2, fn, box=box)


def _expand_like(c):
    if isinstance(c, Dual):
        return Dual(_expand_like(c.value), _expand_like(c.deriv))
    return np.asarray(c)[..., None]


def _match(c, t):
    # append the node axis (to every dual layer) when t carries one
    cv = np.asarray(primal(c))
    tv = np.asarray(primal(t))
    if tv.ndim == cv.ndim + 1:
        return _expand_like(c)
    return c


class DarbouxChart:
    """Local area-preserving map f with p o f = x, plus residual data."""

    def __init__(self, p, center, box_halfwidth, h, fn, stats):
        self.p = p
        self.center = center
        self.box_halfwidth = box_halfwidth
        self.h = h
        self.fn = fn
        self.residuals = stats

    def eval(self, x, y):
        return self.fn(x, y)

    def jacobian(self, x, y):
        return nk.jacobian(lambda q: self.fn(q[0], q[1]), (x, y))

    def det(self, x, y):
        return nk.jac_det(lambda q: self.fn(q[0], q[1]), (x, y))


def darboux_normalize(p, center, flow_tol: float = 1e-11) -> DarbouxChart:
    """Chart f = g o rho_1 around ``center``; the box halves (at most 8
    times) until the solve and flow succeed and the residuals
    |p(f) - x| and |det Df - 1| stay within 1e-6 on a 21 x 21 grid."""
    center = (float(center[0]), float(center[1]))
    px0 = float(primal(p.partial(1, center)))
    if px0 <= 0.0:
        raise DerivativeSignViolation(
            f"dp/dx({center}) = {px0:.3e}; rotate the input first")
    half = 0.5
    last_err = None
    for _ in range(9):
        try:
            probe = implicit_h(p, center, half)
            # re-solve with a y-extent covering the flow's amplification
            h = implicit_h(p, center, half,
                           y_factor=2.0 * max(1.0, probe.px_max) + 1.0)
            field = darboux_field(p, h, center)

            def fn(x, y, h=h, field=field):
                x1, y1 = nk.flow_ode(field, (x, y), flow_tol)
                return (h(x1, y1), y1)

            xs = np.linspace(center[0] - half, center[0] + half, 21)
            ys = np.linspace(center[1] - half, center[1] + half, 21)
            X, Y = [g.ravel() for g in np.meshgrid(xs, ys)]
            fx, fy = fn(X, Y)
            pres = np.max(np.abs(primal(p.eval((primal(fx), primal(fy)))) - X))
            det = nk.jac_det(lambda q: fn(q[0], q[1]), (X, Y))
            dres = np.max(np.abs(primal(det) - 1.0))
            if pres <= 1e-6 and dres <= 1e-6:
                stats = {"p_residual": float(pres), "det_residual": float(dres)}
                return DarbouxChart(p, center, half, h, fn, stats)
            last_err = (pres, dres)
        except (nk.NumericsError, nk.ValidationError) as err:
            last_err = err
        half *= 0.5
    raise ShrinkExhausted(
        f"no box met the residual targets near {center}; last: {last_err}")


def gradient_precondition(p, center):
    """Rotation M taking e1 to the unit gradient of p at ``center``.

    Returns (M as a 2x2 array, the rotated field p o M, the angle).  M is a
    pure rotation, hence exactly area-preserving, and the composed field has
    positive x-derivative at M^-1 center.
    """
    center = (float(center[0]), float(center[1]))
    gx = float(primal(p.partial(1, center)))
    gy = float(primal(p.partial(2, center)))
    norm = float(np.hypot(gx, gy))
    if norm <= 1e-8:
        raise ZeroGradient(f"|grad p({center})| = {norm:.3e}")
    angle = float(np.arctan2(gy, gx))
    c, s = np.cos(angle), np.sin(angle)
    M = np.array([[c, -s], [s, c]])

    def fn(q):
        u, v = q
        return p.eval((c * u - s * v, s * u + c * v))

    return M, CallableField(fn, 2), angle
