"""Area-preserving extensions of circle diffeomorphisms to the plane.

Two constructions are provided, both verified numerically by the test
suite and the CLI report path:

* the homotopy method: blend the circle map into the identity across a
  band, then flow along the time-dependent field that restores the area
  form (``moser_extension``);
* the generating-function method: perturb S0 = x*y by a cutoff multiple of
  a mollified primitive of F' - 1 and read the map off the implicit
  relations (x, S_x) -> (S_y, y) (``gen_extension``).

Cylinder maps use coordinates (s, theta) with the invariant circle at
s = 0 and the area form ds ^ dtheta; ``cylinder_to_plane`` conjugates by
r = sqrt(2 s + 1) so the circle lands on the unit circle and unit Jacobian
determinant is preserved exactly.
"""

from __future__ import annotations

import numpy as np

from . import bumps
from . import numkit as nk
from .fndsl import CallableField, Expr, ScalarField, to_field
from .numkit import Dual, primal, where

__all__ = [
    "NotALift", "NotIncreasing", "BlendInfeasible", "BandTooDeep",
    "CircleLift", "make_lift", "rotate_normalize", "subdivide_lift",
    "gen_Q", "GeneratingFunction", "build_generating_function",
    "CylinderMap", "gen_extension", "compose_cylinder",
    "MoserBlend", "moser_blend", "moser_field", "moser_extension",
    "PlaneMap", "cylinder_to_plane",
    "extend_circle_moser", "extend_circle_gen", "c2_distance",
]


class NotALift(nk.ValidationError):
    pass


class NotIncreasing(nk.ValidationError):
    pass


class BlendInfeasible(nk.ValidationError):
    pass


class BandTooDeep(nk.ValidationError):
    pass


# ---------------------------------------------------------------------------
# lifts

class CircleLift:
    """Lift F of an orientation-preserving circle diffeomorphism.

    F(x+1) = F(x) + 1 and F' > 0; ``a`` is F' - 1, whose integral over any
    period vanishes.  ``rotation_offset`` records a rotation split off by
    :func:`rotate_normalize`.
    """

    def __init__(self, field, rotation_offset: float = 0.0):
        self.field = field
        self.rotation_offset = rotation_offset

    def F(self, x):
        return self.field.eval((x,))

    def deriv(self, x):
        return self.field.partial(1, (x,))

    def a(self, x):
        return self.deriv(x) - 1.0

    def a_norm(self, samples: int = 512) -> float:
        xs = np.linspace(0.0, 1.0, samples, endpoint=False)
        return float(np.max(np.abs(primal(self.a(xs)))))


def make_lift(F_expr) -> CircleLift:
    """Validate and wrap a lift given as an Expr, ScalarField, or CircleLift.

    Checks (sampled): periodicity F(x+1) = F(x)+1 to 1e-10, positivity of
    F', and the vanishing of the period integral of a = F' - 1 to 1e-10.
    """
    if isinstance(F_expr, CircleLift):
        field = F_expr.field
    elif isinstance(F_expr, Expr):
        field = to_field(F_expr)
    else:
        field = F_expr
    if field.arity != 1:
        raise NotALift(f"lift must have arity 1, got {field.arity}")
    lift = CircleLift(field)
    xs = np.linspace(0.0, 1.0, 100, endpoint=False)
    per = np.abs(primal(lift.F(xs + 1.0)) - primal(lift.F(xs)) - 1.0)
    if np.max(per) > 1e-10:
        raise NotALift(f"F(x+1) - F(x) - 1 reaches {np.max(per):.3e} (tol 1e-10)")
    ds = primal(lift.deriv(np.linspace(0.0, 1.0, 512, endpoint=False)))
    if np.min(ds) <= 0.0:
        raise NotIncreasing(f"F' reaches {np.min(ds):.3e}; lift must be increasing")
    for u in np.linspace(0.0, 1.0, 8, endpoint=False):
        integral = nk.integrate_1d(lambda t: float(primal(lift.a(t))),
                                   u, u + 1.0, 1e-12)
        if abs(integral) > 1e-10:
            raise NotALift(f"period integral of F'-1 at u={u:.3f} is {integral:.3e}")
    return lift


def rotate_normalize(lift: CircleLift) -> CircleLift:
    """Split off the rotation so the normalized lift fixes 0.

    Returns G(x) = F(x) - F(0) with ``rotation_offset`` = F(0); the plane
    extension post-composes with the rigid rotation by 2*pi*F(0), which is
    exactly area-preserving.
    """
    F0 = float(primal(lift.F(0.0)))
    if F0 == 0.0:
        return lift
    base = lift.field
    field = CallableField(lambda p: base.eval(p) - F0, 1)
    return CircleLift(field, rotation_offset=lift.rotation_offset + F0)


def subdivide_lift(lift: CircleLift, max_a_norm: float = 0.25):
    """Factor F into pieces F = F_m o ... o F_1 with each ||F_i' - 1|| small.

    Pieces come from the linear interpolation G_t = (1-t) Id + t F sampled
    at m+1 equispaced times, F_k = G_{t_{k+1}} o G_{t_k}^{-1}; m is the
    smallest power of two for which every measured piece norm is within
    ``max_a_norm``.  Returns the list [F_1, ..., F_m] in application order.
    """
    if lift.a_norm() <= max_a_norm:
        return [lift]
    xs = np.linspace(0.0, 1.0, 512, endpoint=False)
    disp = float(np.max(np.abs(primal(lift.F(xs)) - xs)))
    half = disp + 0.1

    def G(t, u):
        return (1.0 - t) * u + t * lift.F(u)

    def Gp(t, u):
        return (1.0 - t) + t * primal(lift.deriv(u))

    def G_inv(t, x):
        xv = np.asarray(primal(x), dtype=float)
        # G is a monotone near-identity perturbation: warm-started Newton
        u = xv.copy() if xv.ndim else np.asarray(xv, dtype=float)
        ok = False
        for _ in range(30):
            r = primal(G(t, u)) - xv
            if np.max(np.abs(r)) <= 1e-13:
                ok = True
                break
            u = u - r / Gp(t, u)
        if not ok:
            u = nk.solve_monotone_batch(lambda z: primal(G(t, z)), xv,
                                        xv - half, xv + half, 1e-13)
        if isinstance(x, Dual):
            # one dual Newton step transports derivative lanes through the solve
            res = G(t, u) - x
            return u - res / Gp(t, u)
        return u

    m = 2
    while m <= 256:
        ts = np.linspace(0.0, 1.0, m + 1)
        pieces = []
        for k in range(m):
            tk, tk1 = ts[k], ts[k + 1]

            def piece_fn(p, tk=tk, tk1=tk1):
                u = G_inv(tk, p[0])
                return G(tk1, u)

            pieces.append(CircleLift(CallableField(piece_fn, 1)))
        if all(p.a_norm(256) <= max_a_norm for p in pieces):
            return pieces
        m *= 2
    raise nk.NonConvergence("subdivide_lift: norm target unreachable with 256 pieces")


# ---------------------------------------------------------------------------
# generating-function method

_CHI = bumps.normalized_mollifier()
# fixed rules over the mollifier support; panel counts pinned against the
# adaptive integrator in the tests (tol 1e-11 budget)
_CHI_N, _CHI_W = nk.composite_rule(((-0.625, -0.375), (-0.375, 0.375), (0.375, 0.625)),
                                   (6, 6, 6))
_CHI_VALS = np.asarray(primal(_CHI(_CHI_N)), dtype=float)
_DCHI_N, _DCHI_W = nk.composite_rule(((-0.625, -0.375), (0.375, 0.625)), (8, 8))
_DCHI_VALS = np.asarray(primal(_CHI.deriv(_DCHI_N)), dtype=float)


def gen_Q(lift: CircleLift, chi: bumps.BumpProfile | None = None):
    """Mollified primitive machinery for the generating function.

    Returns evaluators (Q, Q_x, Q_y):

        Q(x, y)   = y * int chi(t) [A(x - t y) - A(-t y)] dt
        Q_x(x, y) = y * int chi(t) a(x - t y) dt
        Q_y(x, y) = -int chi'(t) t [A(x - t y) - A(-t y)] dt

    with a = F' - 1 and A(u) = F(u) - u its periodic primitive, so no
    derivative of a is ever required.  The lift must be normalized
    (F(0) = 0).  All evaluators accept dual/array lanes.
    """
    if chi is None:
        chi = _CHI
        tn, tw, chiv = _CHI_N, _CHI_W, _CHI_VALS
        dn, dw, dchiv = _DCHI_N, _DCHI_W, _DCHI_VALS
    else:
        segs = list(zip(chi.breakpoints[:-1], chi.breakpoints[1:]))
        tn, tw = nk.composite_rule(segs, (6,) * len(segs))
        chiv = np.asarray(primal(chi(tn)), dtype=float)
        dn, dw = nk.composite_rule(segs, (8,) * len(segs))
        dchiv = np.asarray(primal(chi.deriv(dn)), dtype=float)
    wchi = tw * chiv
    wdchi_t = dw * dchiv * dn

    def A_diff(x, y, nodes):
        # A(x - t y) - A(-t y) = F(x - t y) - F(-t y) - x, per node
        ty = nk.outer_mul(y, -nodes)
        return lift.F(nk.outer_add(x, ty)) - lift.F(nk.outer_add(0.0 * x, ty)) - _expand(x)

    def Q(x, y):
        return y * nk._wsum(A_diff(x, y, tn), wchi)

    def Q_x(x, y):
        arg = nk.outer_add(x, nk.outer_mul(y, -tn))
        return y * nk._wsum(lift.a(arg), wchi)

    def Q_y(x, y):
        return -nk._wsum(A_diff(x, y, dn), wdchi_t)

    # d/dy Q_x, needed for S_xy; by parts it only involves a, chi, chi'
    def dQx_dy(x, y):
        arg = nk.outer_add(x, nk.outer_mul(y, -dn))
        return -nk._wsum(lift.a(arg), wdchi_t)

    Q.dQx_dy = dQx_dy
    return Q, Q_x, Q_y


def _expand(x):
    """Append a broadcast node axis to lanes of x."""
    if isinstance(x, Dual):
        return Dual(_expand(x.value), _expand(x.deriv))
    return np.asarray(x)[..., None]


class GeneratingFunction:
    """S(x, y) = x y + rho(y) Q(x, y) and its first partials.

    S equals x*y exactly for |y| >= eps; S(x+1, y) = S(x, y) + y.  The
    recorded strip minimum of S_xy certifies monotone invertibility of
    S_x in y.
    """

    def __init__(self, lift, eps, Q, Q_x, Q_y, dQx_dy):
        self.lift = lift
        self.eps = eps
        self._rho = bumps.cutoff(eps)
        self._Q, self._Q_x, self._Q_y, self._dQx_dy = Q, Q_x, Q_y, dQx_dy
        xs = np.linspace(0.0, 1.0, 64, endpoint=False)
        ys = np.linspace(-eps, eps, 33)
        X, Y = [g.ravel() for g in np.meshgrid(xs, ys)]
        self.min_S_xy = float(np.min(primal(self.S_xy(X, Y))))
        self.max_rho_Qx = float(np.max(np.abs(primal(self._rho(Y) * Q_x(X, Y)))))

    def S(self, x, y):
        return x * y + self._rho(y) * self._Q(x, y)

    def S_x(self, x, y):
        return y + self._rho(y) * self._Q_x(x, y)

    def S_y(self, x, y):
        return x + self._rho.deriv(y) * self._Q(x, y) + self._rho(y) * self._Q_y(x, y)

    def S_xy(self, x, y):
        return 1.0 + self._rho.deriv(y) * self._Q_x(x, y) + self._rho(y) * self._dQx_dy(x, y)


def build_generating_function(lift: CircleLift, eps: float) -> GeneratingFunction:
    """Assemble S for a normalized lift; the sampled strip minimum of S_xy
    must exceed 0.05, otherwise :class:`~sympext.numkit.NonMonotone` asks the
    caller to subdivide the lift first."""
    if abs(float(primal(lift.F(0.0)))) > 1e-9:
        raise NotALift("generating function needs a normalized lift (F(0) = 0)")
    Q, Q_x, Q_y = gen_Q(lift)
    gf = GeneratingFunction(lift, eps, Q, Q_x, Q_y, Q.dQx_dy)
    if gf.min_S_xy <= 0.05:
        raise nk.NonMonotone(
            f"min S_xy = {gf.min_S_xy:.4f} <= 0.05; subdivide the lift")
    return gf


def c2_distance(gf: GeneratingFunction) -> float:
    """Sampled C^2 distance of S from x*y over the cutoff strip.

    All second partials reduce to integrals of a against chi, chi' by parts,
    so the diagnostic needs only first derivatives of the lift.
    """
    lift, eps, rho = gf.lift, gf.eps, gf._rho
    xs = np.linspace(0.0, 1.0, 48, endpoint=False)
    ys = np.linspace(-eps, eps, 25)
    X, Y = [g.ravel() for g in np.meshgrid(xs, ys)]

    def a_at(nodes, x, y):
        return lift.a(nk.outer_add(x, nk.outer_mul(y, -nodes)))

    wdchi = _DCHI_W * _DCHI_VALS
    S_xx = rho(Y) * nk._wsum(a_at(_DCHI_N, X, Y), wdchi)
    arg = nk.outer_mul(Y, -_DCHI_N)
    a_diff = lift.a(nk.outer_add(X, arg)) - lift.a(nk.outer_add(0.0 * X, arg))
    Q_yy = nk._wsum(a_diff, wdchi * _DCHI_N * _DCHI_N)
    rho_dd = np.asarray([primal(rho.deriv(Dual(float(y), 1.0)).deriv) for y in
                         np.linspace(-eps, eps, 25)])
    rho_dd = np.repeat(rho_dd, 48)
    S_yy = (rho_dd * primal(gf._Q(X, Y))
            + 2.0 * primal(rho.deriv(Y) * gf._Q_y(X, Y))
            + primal(rho(Y)) * primal(Q_yy))
    vals = [np.abs(primal(rho(Y) * gf._Q(X, Y))),
            np.abs(primal(gf.S_x(X, Y) - Y)),
            np.abs(primal(gf.S_y(X, Y) - X)),
            np.abs(primal(gf.S_xy(X, Y)) - 1.0),
            np.abs(primal(S_xx)),
            np.abs(S_yy)]
    return float(max(np.max(v) for v in vals))


# ---------------------------------------------------------------------------
# cylinder maps

class CylinderMap:
    """Evaluable map of the cylinder, (s, theta) -> (s', theta').

    Identity (bitwise) wherever |s| >= ``band``; theta-periodic:
    eval(s, theta + 1) = eval(s, theta) + (0, 1).
    """

    def __init__(self, fn, band: float, identity_region: str):
        self.fn = fn
        self.band = band
        self.identity_region = identity_region

    def eval(self, s, theta):
        return self.fn(s, theta)

    def jacobian(self, s, theta):
        return nk.jacobian(lambda p: self.fn(p[0], p[1]), (s, theta))

    def det(self, s, theta):
        return nk.jac_det(lambda p: self.fn(p[0], p[1]), (s, theta))


def compose_cylinder(maps) -> CylinderMap:
    """Composition (last applied last); identity bands widen to the max."""
    maps = list(maps)

    def fn(s, theta):
        for m in maps:
            s, theta = m.eval(s, theta)
        return s, theta

    band = max(m.band for m in maps)
    return CylinderMap(fn, band, f"|s| >= {band}")


def gen_extension(lift: CircleLift, eps: float = 0.5) -> CylinderMap:
    """Extension by the generating function: solve S_x(x, y) = s for y
    (monotone since S_xy > 0), output (y, S_y(x, y)).

    Exactly the identity for |s| >= eps; the circle restriction is
    (0, theta) -> (0, F(theta)) to solver tolerance.
    """
    gf = build_generating_function(lift, eps)

    def fn(s, theta):
        sv = np.asarray(primal(s), dtype=float)
        tv = np.asarray(primal(theta), dtype=float)
        sv, tv = np.broadcast_arrays(sv, tv)
        ident = np.abs(sv) >= eps
        if np.all(ident):
            return s, theta
        # warm-started Newton on S_x(theta, y) = s (monotone: S_xy > 0),
        # with a bisection fallback for any stalled lane
        width = np.abs(sv) + eps
        y0 = sv.copy() if sv.ndim else np.asarray(sv, dtype=float)
        ok = False
        for _ in range(40):
            r = primal(gf.S_x(tv, y0)) - sv
            if np.max(np.abs(r)) <= 1e-13:
                ok = True
                break
            y0 = np.clip(y0 - r / primal(gf.S_xy(tv, y0)), -width, width)
        if not ok:
            y0 = nk.solve_monotone_batch(lambda y: primal(gf.S_x(tv, y)), sv,
                                         -width, width, 1e-13)
        if isinstance(s, Dual) or isinstance(theta, Dual):
            # implicit-function dual transport: one Newton step in duals
            resid = gf.S_x(theta, y0) - s
            y = y0 - resid / primal(gf.S_xy(tv, y0))
        else:
            y = y0
        s_out = where(ident, s, y)
        t_out = where(ident, theta, gf.S_y(theta, y))
        return s_out, t_out

    m = CylinderMap(fn, eps, f"|s| >= {eps}")
    m.generating_function = gf
    return m


# ---------------------------------------------------------------------------
# homotopy method

class MoserBlend:
    """Blend h(s, theta) = theta + w(s) (F(theta) - theta) and its
    theta-derivative; h(0, .) = F and h = identity outside the band."""

    def __init__(self, lift: CircleLift, w: bumps.BlendProfile):
        self.lift = lift
        self.w = w

    def h(self, s, theta):
        return theta + self.w(s) * (self.lift.F(theta) - theta)

    def h_theta(self, s, theta):
        return 1.0 + self.w(s) * (self.lift.a(theta))


def moser_blend(lift: CircleLift, w: bumps.BlendProfile) -> MoserBlend:
    """Validate blend feasibility: the lobe depth must stay below
    1/max(||F'-1||, 1e-6) and the sampled h_theta must stay positive."""
    a_norm = lift.a_norm()
    if w.depth >= 1.0 / max(a_norm, 1e-6):
        raise BlendInfeasible(
            f"lobe depth {w.depth:.3f} >= 1/||F'-1|| = {1.0 / max(a_norm, 1e-6):.3f}; "
            "subdivide the lift")
    blend = MoserBlend(lift, w)
    ss = np.linspace(-w.support[1], w.support[1], 41)
    th = np.linspace(0.0, 1.0, 64, endpoint=False)
    S, T = [g.ravel() for g in np.meshgrid(ss, th)]
    hmin = float(np.min(primal(blend.h_theta(S, T))))
    if hmin <= 0.05:
        raise BlendInfeasible(f"min h_theta = {hmin:.4f} <= 0.05; subdivide the lift")
    return blend


def moser_field(blend: MoserBlend) -> nk.TimeField:
    """Time-dependent field restoring the area form along the blend homotopy.

    v^theta = 0 and

        v^s(t, s, theta) = (1 - F'(theta)) W(s) / (t h_theta(s, theta) + 1 - t)

    with W(s) = int_0^s w.  Both half-integrals of w vanish, so W (hence
    the field) is exactly zero outside the band and at s = 0: the circle is
    pointwise fixed and the isotopy is compactly supported.
    """
    lift, w = blend.lift, blend.w

    def fn(t, x):
        s, theta = x
        Wv = w.cumulative(s)
        denom = t * blend.h_theta(s, theta) + (1.0 - t)
        vs = (1.0 - lift.deriv(theta)) * Wv / denom
        return (vs, 0.0)

    return nk.TimeField(2, fn)


def moser_extension(lift: CircleLift, w: bumps.BlendProfile | None = None,
                    flow_tol: float = 1e-10) -> CylinderMap:
    """Homotopy-method extension g o rho_1 with g(s, theta) = (s, h(s, theta))
    and rho_1 the time-1 flow of :func:`moser_field`.

    theta is constant along the flow (the field has no theta component), so
    the integration runs as a one-dimensional flow in s with the lift values
    at theta hoisted out of the stage loop.
    """
    if w is None:
        w = bumps.balanced_blend(0.05, 0.3, 0.5)
    blend = moser_blend(lift, w)
    band = w.support[1]

    def fn(s, theta):
        sv = np.asarray(primal(s), dtype=float)
        if np.all(np.abs(sv) >= band):
            return s, theta
        a_th = lift.a(theta)
        F_th = lift.F(theta)

        def field1(t, x):
            (sc,) = x
            Wv = w.cumulative(sc)
            denom = t * (1.0 + w(sc) * a_th) + (1.0 - t)
            return (-a_th * Wv / denom,)

        (s1,) = nk.flow_ode(nk.TimeField(1, field1), (s,), flow_tol)
        return s1, theta + w(s1) * (F_th - theta)

    return CylinderMap(fn, band, f"|s| >= {band}")


# ---------------------------------------------------------------------------
# plane conjugation

class PlaneMap:
    """Map of the plane with Jacobian access and exact identity metadata.

    Identity (bitwise) on the disk r <= ``r_inner`` and outside
    r >= ``r_outer`` whenever ``rotation_offset`` is zero; otherwise those
    regions carry the exact rigid rotation.
    """

    def __init__(self, fn, r_inner: float, r_outer: float,
                 rotation_offset: float = 0.0):
        self.fn = fn
        self.r_inner = r_inner
        self.r_outer = r_outer
        self.rotation_offset = rotation_offset

    def eval(self, x, y):
        return self.fn(x, y)

    def jacobian(self, x, y):
        return nk.jacobian(lambda p: self.fn(p[0], p[1]), (x, y))

    def det(self, x, y):
        return nk.jac_det(lambda p: self.fn(p[0], p[1]), (x, y))


_TWO_PI = 2.0 * np.pi


def cylinder_to_plane(cmap: CylinderMap, rotation_offset: float = 0.0) -> PlaneMap:
    """Conjugate a cylinder map by Phi(s, theta) = sqrt(2s+1) (cos etc.).

    Phi has constant Jacobian determinant 2*pi, so the conjugated plane map
    inherits unit determinant exactly; the s = 0 circle lands on the unit
    circle.  The map must be the identity below the band edge with
    band < 1/2 (else the chart would fold through the origin) and is
    extended by the identity on the inner disk and at the origin, then
    post-composed with the rigid rotation by ``rotation_offset`` turns.
    """
    band = cmap.band
    if band >= 0.5:
        raise BandTooDeep(f"cylinder band |s| < {band} reaches s <= -1/2")
    r_inner = float(np.sqrt(1.0 - 2.0 * band))
    r_outer = float(np.sqrt(1.0 + 2.0 * band))
    offset = rotation_offset % 1.0

    def fn(x, y):
        xv = np.asarray(primal(x), dtype=float)
        yv = np.asarray(primal(y), dtype=float)
        r2v = xv * xv + yv * yv
        active = (r2v > r_inner * r_inner) & (r2v < r_outer * r_outer)
        if not np.any(active):
            return _rotate(x, y, offset)
        r2 = x * x + y * y
        s_in = where(active, 0.5 * (r2 - 1.0), 0.0)
        th_in = where(active, nk.atan2(y, x) / _TWO_PI, 0.0)
        s1, th1 = cmap.eval(s_in, th_in)
        r1 = nk.sqrt(2.0 * s1 + 1.0)
        ang = _TWO_PI * (th1 + offset)
        x1 = r1 * nk.cos(ang)
        y1 = r1 * nk.sin(ang)
        xr, yr = _rotate(x, y, offset)
        return where(active, x1, xr), where(active, y1, yr)

    return PlaneMap(fn, r_inner, r_outer, rotation_offset)


def _rotate(x, y, offset):
    if offset == 0.0:
        return x, y
    c = np.cos(_TWO_PI * offset)
    s = np.sin(_TWO_PI * offset)
    return c * x - s * y, s * x + c * y


# ---------------------------------------------------------------------------
# end-to-end pipelines

def extend_circle_moser(lift, w: bumps.BlendProfile | None = None,
                        flow_tol: float = 1e-10) -> PlaneMap:
    """Plane extension by the homotopy method.

    A lift whose blend is infeasible is subdivided and the per-piece
    extensions composed on the cylinder before conjugating to the plane.
    """
    lift = make_lift(lift)
    try:
        cmap = moser_extension(lift, w, flow_tol)
    except BlendInfeasible:
        pieces = subdivide_lift(lift)
        cmap = compose_cylinder([moser_extension(p, w, flow_tol) for p in pieces])
    return cylinder_to_plane(cmap, lift.rotation_offset)


def extend_circle_gen(lift, eps: float = 0.45,
                      max_a_norm: float = 0.25) -> PlaneMap:
    """Plane extension by the generating-function method.

    The lift is rotation-normalized and extended directly when the
    generating function stays monotone; otherwise it is subdivided until
    every piece has ||F'-1|| <= max_a_norm and the per-piece extensions are
    composed.  The default cutoff 0.45 keeps the band above s = -1/2 with an
    exact-identity disk of radius sqrt(0.1) around the origin.
    """
    lift = rotate_normalize(make_lift(lift))
    norm = max_a_norm
    pieces = [lift]
    while True:
        try:
            maps = [gen_extension(p, eps) for p in pieces]
            break
        except nk.NonMonotone:
            pieces = subdivide_lift(lift, norm)
            if len(pieces) == 1:
                raise
            norm *= 0.5
            if norm < 1e-3:
                raise
    cmap = compose_cylinder(maps)
    return cylinder_to_plane(cmap, lift.rotation_offset)
