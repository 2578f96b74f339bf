"""Smooth compactly-supported profiles: plateau bumps, cutoffs, the
unit-integral beta families with their exact normalization constants, and
the zero-mean balanced blend used by the homotopy extension.

All transitions use the standard ``exp(-1/u)`` smoothstep, which is
infinitely flat at both ends, so plateau values and their derivatives of
every order are exact.  Profile evaluation is generic over scalars
(floats/arrays/duals) and returns exact constants outside supports and on
plateaus.
"""

from __future__ import annotations

import numpy as np

from . import numkit as nk
from .numkit import primal, where

__all__ = [
    "NonPositiveParameter", "InfeasibleBalance",
    "transition", "BumpProfile", "plateau_bump",
    "normalized_mollifier", "cutoff",
    "reference_bump", "reference_half_integral",
    "beta2_consts", "beta2_eval", "beta3_eval",
    "BetaProfile", "beta2", "beta3",
    "BlendProfile", "balanced_blend",
]


class NonPositiveParameter(nk.ValidationError):
    pass


class InfeasibleBalance(nk.ValidationError):
    pass


def _E(v):
    # exp(-1/v) for v > 0, identically 0 otherwise; safe for arrays/duals
    vv = primal(v)
    vsafe = where(vv > 1e-30, v, 1e-30)
    val = nk.exp(-1.0 / vsafe)
    return where(vv > 0.0, val, 0.0)


def transition(u):
    """Smoothstep e(u) = E(u)/(E(u)+E(1-u)), exactly 0 for u<=0, 1 for u>=1.

    Satisfies e(u) + e(1-u) = 1.
    """
    uv = primal(u)
    a = _E(u)
    b = _E(1.0 - u)
    val = a / (a + b + where(primal(a + b) > 0.0, 0.0, 1.0))
    return where(uv <= 0.0, 0.0, where(uv >= 1.0, 1.0, val))


class BumpProfile:
    """Smooth profile with exact support/plateau metadata.

    ``eval`` is identically the plateau value on ``plateau`` and identically
    zero outside ``support`` (bitwise, via branch selection).  ``deriv``
    evaluates the same closure over a dual seed.  ``integral`` is computed
    lazily by adaptive quadrature at tol 1e-12 and cached.
    """

    def __init__(self, fn, support, plateau, plateau_value, breakpoints):
        self.fn = fn
        self.support = support
        self.plateau = plateau
        self.plateau_value = plateau_value
        self.breakpoints = tuple(breakpoints)
        self._integral = None

    def eval(self, x):
        return self.fn(x)

    def __call__(self, x):
        return self.fn(x)

    def deriv(self, x):
        return nk.derivative_of(self.fn, x)

    @property
    def integral(self) -> float:
        if self._integral is None:
            acc = 0.0
            for lo, hi in zip(self.breakpoints[:-1], self.breakpoints[1:]):
                acc += nk.integrate_1d(lambda t: float(self.fn(t)), lo, hi, 1e-12)
            self._integral = acc
        return self._integral


def plateau_bump(plateau, width, value: float = 1.0) -> BumpProfile:
    """Bump equal to ``value`` on ``plateau`` with smooth edges of ``width``."""
    p0, p1 = plateau
    if not (p1 >= p0 and width > 0):
        raise ValueError("need plateau hi >= lo and width > 0")
    s0, s1 = p0 - width, p1 + width

    def fn(x):
        xv = primal(x)
        rise = transition((x - s0) / width)
        fall = transition((s1 - x) / width)
        core = where(xv < p0, rise, where(xv > p1, fall, 1.0))
        return value * core

    return BumpProfile(fn, (s0, s1), (p0, p1), value,
                       breakpoints=(s0, p0, p1, s1))


def normalized_mollifier() -> BumpProfile:
    """Symmetric plateau bump with value 1 at 0, zero high-order derivatives
    there, and total integral exactly 1.

    Plateau [-3/8, 3/8], edge width 1/4, support [-5/8, 5/8] in (-1, 1); the
    edge shape integrates to half its width by the e(u)+e(1-u)=1 symmetry,
    which pins the plateau half-width at (1 - 2*(w/2))/2 = 3/8.
    """
    return plateau_bump((-0.375, 0.375), 0.25)


def cutoff(eps: float) -> BumpProfile:
    """Even profile, 1 on [-eps/2, eps/2], 0 outside (-eps, eps)."""
    if eps <= 0:
        raise NonPositiveParameter("cutoff radius must be positive")
    return plateau_bump((-eps / 2.0, eps / 2.0), eps / 2.0)


# ---------------------------------------------------------------------------
# beta family

_REF = plateau_bump((-0.5, 0.5), 0.25)  # support (-3/4, 3/4) in (-1, 1)
_REF_C: float | None = None


def reference_bump() -> BumpProfile:
    """The fixed symmetric reference bump used inside the beta family."""
    return _REF


def reference_half_integral() -> float:
    """C = integral of the reference bump over [0, 1] (cached, tol 1e-12)."""
    global _REF_C
    if _REF_C is None:
        _REF_C = nk.integrate_1d(lambda t: float(_REF(t)), 0.0, 1.0, 1e-12)
    return _REF_C


def beta2_consts(a, b):
    """Scale f(a,b) = 1/(C(a+b)+2) and offset g(a,b) solving
    C f (a+b-2) = g (1 - 2Cf).  Generic over scalars."""
    C = reference_half_integral()
    f = 1.0 / (C * (a + b) + 2.0)
    g = C * f * (a + b - 2.0) / (1.0 - 2.0 * C * f)
    return f, g


def beta2_eval(a, b, x):
    """Two-plateau profile: equals a near 0 and b near 1, unit integral on
    [0,1], continued by the constants a and b outside.  All arguments may be
    arrays or duals (parameters varying over evaluation lanes)."""
    f, g = beta2_consts(a, b)
    val = ((a - 1.0 + g) * _REF(x / f)
           + 1.0 - g
           + (b - 1.0 + g) * _REF((x - 1.0) / f))
    xv = primal(x)
    zero = 0.0 * val  # carries lane shape/duals so the selection broadcasts
    return where(xv <= 0.0, a + zero, where(xv >= 1.0, b + zero, val))


def beta3_eval(a, b, c, x):
    """Glued profile: a near 0, b near 1, c near -1; unit integral on both
    [-1,0] and [0,1]."""
    xv = primal(x)
    return where(xv >= 0.0, beta2_eval(a, b, x), beta2_eval(a, c, -x))


# cumulative of the transition shape as a certified Chebyshev proxy (hot
# path: one polynomial evaluation instead of a partial-panel quadrature);
# feeds the closed-form cumulative of the reference bump / beta family
_XI_PROXY = nk.Cheb1D(
    lambda t: nk.CumulativeCache(transition, 0.0, 1.0, panels=16)(t),
    0.0, 1.0, tol=1e-13, degrees=(48, 64, 96))


def _XI(w):
    return _XI_PROXY.value(w)


_C_X = 0.5 + 0.25 * (1.0 - float(primal(_XI(1.0))))


def ref_bump_cum(u):
    """X(u) = integral of the reference bump from 0 to u (odd in u).

    Closed form up to the cached transition cumulative: identity slope on
    the plateau, an edge correction on [1/2, 3/4], constant beyond.
    """
    uv = np.asarray(primal(u), dtype=float)
    mag = nk.absolute(u)
    w_arg = nk.minimum(nk.maximum(4.0 * mag - 2.0, 0.0), 1.0)
    edge = 0.5 + 0.25 * (w_arg - _XI(w_arg))
    sign = np.sign(uv)
    out = where(np.abs(uv) <= 0.5, u + 0.0 * mag, sign * edge)
    return where(np.abs(uv) >= 0.75, sign * _C_X, out)


def beta2_cum(a, b, x):
    """Integral of the two-plateau beta profile from 0 to x, closed form.

    Exact unit integral over [0,1] (to rounding) by the defining constants;
    generic over lanes and duals in all three arguments.  Valid for
    x in [0, 1]; the profile's constant continuations are the caller's
    business.
    """
    f, g = beta2_consts(a, b)
    X0 = ref_bump_cum(x / f)
    X1 = ref_bump_cum((x - 1.0) / f)
    return ((1.0 - g) * x
            + (a - 1.0 + g) * f * X0
            + (b - 1.0 + g) * f * (X1 + _C_X))


def beta3_cum(a, b, c, x):
    """Integral of the glued three-plateau profile from 0 to x on [-1, 1]."""
    xv = np.asarray(primal(x), dtype=float)
    return where(xv >= 0.0, beta2_cum(a, b, x), -beta2_cum(a, c, -x))


class BetaProfile:
    """Concrete beta instance with its normalization constants recorded."""

    def __init__(self, a: float, b: float, c: float | None = None):
        for name, v in (("a", a), ("b", b)) + ((("c", c),) if c is not None else ()):
            if not v > 0:
                raise NonPositiveParameter(f"beta parameter {name} = {v} must be > 0")
        self.a = float(a)
        self.b = float(b)
        self.c = None if c is None else float(c)
        self.f_ab, self.g_ab = beta2_consts(self.a, self.b)

    def eval(self, x):
        if self.c is None:
            return beta2_eval(self.a, self.b, x)
        return beta3_eval(self.a, self.b, self.c, x)

    def __call__(self, x):
        return self.eval(x)

    def deriv(self, x):
        return nk.derivative_of(self.eval, x)


def beta2(a: float, b: float) -> BetaProfile:
    return BetaProfile(a, b)


def beta3(a: float, b: float, c: float) -> BetaProfile:
    return BetaProfile(a, b, c)


# ---------------------------------------------------------------------------
# balanced blend

_CUM_PANELS = 8


class BlendProfile(BumpProfile):
    """Even profile: 1 on [-p, p], one negative lobe per side, scaled so both
    half-integrals vanish.  ``cumulative`` evaluates W(s) = int_0^s w, which
    is exactly zero outside the support."""

    def __init__(self, fn, support, plateau, breakpoints, depth, cum_segments):
        super().__init__(fn, support, plateau, 1.0, breakpoints)
        self.depth = depth
        # right-half structural segments: (lo, hi, base, slope-or-None, fn);
        # plateau pieces integrate in closed form, edges by a fixed rule
        self._cum_segments = cum_segments

    def cumulative(self, s):
        sv = primal(s)
        mag = nk.absolute(s)
        acc = 0.0 * mag
        hi = self.support[1]
        p = self.plateau[1]
        # on [-p, p] use W(s) = s directly: exact and differentiable at 0,
        # where |s| is not
        for (lo, hi_seg, base, slope, seg_fn) in self._cum_segments[1:]:
            take = (np.abs(sv) >= lo) & (np.abs(sv) < hi_seg)
            if not np.any(take):
                continue
            upper = nk.minimum(mag, hi_seg)
            if slope is not None:
                part = base + slope * (upper - lo)
            else:
                part = base + nk.integrate_to(seg_fn, lo, upper, panels=_CUM_PANELS)
            acc = where(take, part, acc)
        out = where(np.abs(sv) >= hi, 0.0, np.sign(sv) * acc)
        return where(np.abs(sv) <= p, s + 0.0 * acc, out)


def balanced_blend(plateau_halfwidth: float, lobe_width: float,
                   depth_cap: float) -> BlendProfile:
    """Profile w with w = 1 on [-p, p] and a negative side lobe sized so that
    int_0^inf w = int_-inf^0 w = 0 exactly.

    The lobe is a plateau bump of width ``lobe_width`` (quarter-width edges);
    the required depth is solved from the positive area by 1-D normalization
    and must not exceed ``depth_cap``.
    """
    p = float(plateau_halfwidth)
    L = float(lobe_width)
    if p <= 0 or L <= 0:
        raise NonPositiveParameter("plateau_halfwidth and lobe_width must be > 0")
    if not 0.0 < depth_cap < 1.0 + 1e-12:
        raise NonPositiveParameter("depth_cap must lie in (0, 1)")
    w1 = L / 4.0  # descent edge width
    lobe_lo = p + w1
    lobe_hi = lobe_lo + L
    lobe = plateau_bump((lobe_lo + L / 4.0, lobe_hi - L / 4.0), L / 4.0)

    def descent(x):
        return transition((p + w1 - x) / w1)

    def lobe_rise(x):
        return -transition((x - lobe_lo) / (L / 4.0))

    def lobe_fall(x):
        return -transition((lobe_hi - x) / (L / 4.0))

    # areas from the same fixed per-segment rule used by `cumulative`, so the
    # half integrals cancel to rounding
    i_descent = float(nk.integrate_to(descent, p, lobe_lo, panels=_CUM_PANELS))
    i_rise = -float(nk.integrate_to(lobe_rise, lobe_lo, lobe_lo + L / 4.0,
                                    panels=_CUM_PANELS))
    i_fall = -float(nk.integrate_to(lobe_fall, lobe_hi - L / 4.0, lobe_hi,
                                    panels=_CUM_PANELS))
    pos_area = p + i_descent
    lobe_unit = i_rise + L / 2.0 + i_fall
    depth = pos_area / lobe_unit
    if depth > depth_cap:
        raise InfeasibleBalance(
            f"required lobe depth {depth:.4f} exceeds cap {depth_cap}; widen the lobes")

    def fn(x):
        xm = nk.absolute(x)
        xv = np.abs(primal(x))
        rise = transition((p + w1 - xm) / w1)
        pos = where(xv <= p, 1.0, rise)
        neg = -depth * lobe.fn(xm)
        val = where(xv <= lobe_lo, pos, neg)
        return where(xv >= lobe_hi, 0.0, val)

    def d_rise(x):
        return depth * lobe_rise(x)

    def d_fall(x):
        return depth * lobe_fall(x)

    # (lo, hi, base at lo, slope | None, integrand) per right-half segment
    b1 = p
    b2 = b1 + i_descent
    b3 = b2 - depth * i_rise
    b4 = b3 - depth * (L / 2.0)
    cum_segments = [
        (0.0, p, 0.0, 1.0, None),
        (p, lobe_lo, b1, None, descent),
        (lobe_lo, lobe_lo + L / 4.0, b2, None, d_rise),
        (lobe_lo + L / 4.0, lobe_hi - L / 4.0, b3, -depth, None),
        (lobe_hi - L / 4.0, lobe_hi, b4, None, d_fall),
    ]
    bp = (-lobe_hi, -lobe_lo, -p, p, lobe_lo, lobe_hi)
    prof = BlendProfile(fn, (-lobe_hi, lobe_hi), (-p, p), bp, depth, cum_segments)
    return prof
