"""Deterministic numerical kernels: dual numbers, adaptive quadrature,
safeguarded root finding, and adaptive Runge-Kutta flows of time-dependent
vector fields.

Everything here is generic over the scalar type.  A "scalar" may be a plain
float, a numpy array (batched evaluation lanes), or a :class:`Dual` number
whose components are themselves scalars (arbitrary nesting).  Derivatives of
any map built on these kernels are obtained by seeding dual lanes and letting
them ride through quadrature, Newton solves and the integrator.

All routines are pure functions of their inputs and safe to call from many
threads at once.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "NumericsError", "ValidationError", "NonConvergence", "NoBracket",
    "NonMonotone", "DomainEscape", "StepUnderflow", "EvalDomainError",
    "Dual", "primal", "dual_parts", "where", "maximum", "minimum",
    "sin", "cos", "tan", "exp", "log", "sqrt", "tanh", "atan", "absolute",
    "power", "derivative_of", "jacobian", "det2", "jac_det",
    "gauss_rule", "integrate_1d", "integrate_fixed", "integrate_to",
    "composite_rule", "CumulativeCache", "outer_mul", "outer_add",
    "solve_monotone", "solve_monotone_batch",
    "TimeField", "flow_ode", "hamiltonian_field",
]


# ---------------------------------------------------------------------------
# errors

class NumericsError(Exception):
    """A numerical procedure failed (convergence, bracketing, domain)."""


class ValidationError(Exception):
    """Input data violates a precondition of the requested construction."""


class NonConvergence(NumericsError):
    pass


class NoBracket(NumericsError):
    pass


class NonMonotone(NumericsError):
    pass


class DomainEscape(NumericsError):
    pass


class StepUnderflow(NumericsError):
    pass


class EvalDomainError(NumericsError):
    """log/sqrt of a nonpositive value, division by zero, bad power base."""

    def __init__(self, op: str, detail: str = "", point=None):
        self.op = op
        self.point = point
        msg = f"domain error in {op}"
        if detail:
            msg += f": {detail}"
        if point is not None:
            msg += f" at point {point}"
        super().__init__(msg)


# ---------------------------------------------------------------------------
# dual numbers

class Dual:
    """First-order dual scalar ``value + deriv * eps`` with ``eps**2 = 0``.

    ``value`` and ``deriv`` may be floats, numpy arrays, or Duals (nested
    duals give exact higher mixed derivatives).  Arithmetic implements the
    product/chain rules exactly at the operation level; lifting a constant
    is just using the plain number, lifting the active variable is
    ``Dual(x, 1.0)``.
    """

    __slots__ = ("value", "deriv")

    # keep numpy from coercing Dual into object arrays: binary ufuncs defer
    # to the reflected operators below
    __array_ufunc__ = None

    def __init__(self, value, deriv):
        self.value = value
        self.deriv = deriv

    def __repr__(self):
        return f"Dual({self.value!r}, {self.deriv!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.deriv + other.deriv)
        return Dual(self.value + other, self.deriv)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.deriv - other.deriv)
        return Dual(self.value - other, self.deriv)

    def __rsub__(self, other):
        return Dual(other - self.value, -self.deriv)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value * other.value,
                        self.deriv * other.value + self.value * other.deriv)
        return Dual(self.value * other, self.deriv * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            v = self.value / other.value
            return Dual(v, (self.deriv - v * other.deriv) / other.value)
        return Dual(self.value / other, self.deriv / other)

    def __rtruediv__(self, other):
        v = other / self.value
        return Dual(v, -v * self.deriv / self.value)

    def __neg__(self):
        return Dual(-self.value, -self.deriv)

    def __pos__(self):
        return self

    def __pow__(self, k):
        # plain numeric exponent only; general powers go through power()
        if isinstance(k, Dual):
            return power(self, k)
        return Dual(self.value ** k, k * self.value ** (k - 1) * self.deriv)


def primal(u):
    """Strip every dual layer, returning the underlying float/array."""
    while isinstance(u, Dual):
        u = u.value
    return u


def dual_parts(u):
    """Return ``(value, deriv)`` treating a plain scalar as constant."""
    if isinstance(u, Dual):
        return u.value, u.deriv
    return u, 0.0


def where(cond, a, b):
    """Elementwise select that understands duals in either branch."""
    if isinstance(a, Dual) or isinstance(b, Dual):
        av, ad = dual_parts(a)
        bv, bd = dual_parts(b)
        return Dual(where(cond, av, bv), where(cond, ad, bd))
    return np.where(cond, a, b)


def maximum(a, b):
    return where(primal(a) >= primal(b), a, b)


def minimum(a, b):
    return where(primal(a) <= primal(b), a, b)


def sin(u):
    if isinstance(u, Dual):
        return Dual(sin(u.value), cos(u.value) * u.deriv)
    return np.sin(u)


def cos(u):
    if isinstance(u, Dual):
        return Dual(cos(u.value), -sin(u.value) * u.deriv)
    return np.cos(u)


def tan(u):
    if isinstance(u, Dual):
        t = tan(u.value)
        return Dual(t, (1.0 + t * t) * u.deriv)
    return np.tan(u)


def exp(u):
    if isinstance(u, Dual):
        e = exp(u.value)
        return Dual(e, e * u.deriv)
    return np.exp(u)


def log(u):
    v = primal(u)
    if np.any(v <= 0.0):
        raise EvalDomainError("log", "nonpositive argument")
    if isinstance(u, Dual):
        return Dual(log(u.value), u.deriv / u.value)
    return np.log(u)


def sqrt(u):
    v = primal(u)
    if np.any(v < 0.0):
        raise EvalDomainError("sqrt", "negative argument")
    if isinstance(u, Dual):
        s = sqrt(u.value)
        return Dual(s, 0.5 * u.deriv / s)
    return np.sqrt(u)


def tanh(u):
    if isinstance(u, Dual):
        t = tanh(u.value)
        return Dual(t, (1.0 - t * t) * u.deriv)
    return np.tanh(u)


def atan(u):
    if isinstance(u, Dual):
        return Dual(atan(u.value), u.deriv / (1.0 + u.value * u.value))
    return np.arctan(u)


def absolute(u):
    if isinstance(u, Dual):
        s = np.sign(primal(u))
        return Dual(absolute(u.value), s * u.deriv)
    return np.abs(u)


def atan2(y, x):
    if isinstance(y, Dual) or isinstance(x, Dual):
        yv, yd = dual_parts(y)
        xv, xd = dual_parts(x)
        r2 = xv * xv + yv * yv
        return Dual(atan2(yv, xv), (xv * yd - yv * xd) / r2)
    return np.arctan2(y, x)


def power(base, expo):
    """``base ** expo`` with domain checks suitable for the expression DSL.

    Integer exponents admit negative bases; otherwise the base must be
    positive.  Zero base with negative exponent is a domain error.
    """
    ev = primal(expo)
    bv = primal(base)
    expo_const = not isinstance(expo, Dual) or np.all(primal(expo.deriv) == 0.0)
    integral = np.all(ev == np.floor(ev))
    if expo_const and integral:
        k = ev
        if np.any((bv == 0.0) & (ev < 0)):
            raise EvalDomainError("power", "0 raised to a negative exponent")
        if isinstance(base, Dual):
            return base ** k
        return base ** k
    if np.any(bv <= 0.0):
        raise EvalDomainError("power", "non-integer power of a nonpositive base")
    return exp(log(base) * expo)


def derivative_of(f, u):
    """d/du f(u), valid when ``u`` itself carries dual lanes (adds a layer)."""
    r = f(Dual(u, 1.0))
    if isinstance(r, Dual):
        return r.deriv
    return np.zeros_like(primal(u))


def jacobian(fn, point):
    """Jacobian of ``fn`` (tuple -> tuple) at ``point`` via dual seeding.

    Returns a nested list ``J[i][j] = d out_i / d x_j``.  For plain points a
    single ``fn`` evaluation produces all columns (the seed derivative of
    coordinate ``j`` is the ``j``-th basis vector stacked along a leading
    axis).  Points that already carry duals are seeded one column at a time
    with scalar seeds, so the entries keep the incoming derivative lanes.
    """
    n = len(point)
    if any(isinstance(c, Dual) for c in point):
        cols = []
        for j in range(n):
            lifted = tuple(Dual(c, 1.0 if k == j else 0.0)
                           for k, c in enumerate(point))
            out = fn(lifted)
            cols.append([dual_parts(comp)[1] for comp in out])
        return [[cols[j][i] for j in range(n)] for i in range(n)]
    vals = [np.asarray(c, dtype=float) for c in point]
    shape = np.broadcast_shapes(*[v.shape for v in vals])
    seeds = []
    for j in range(n):
        s = np.zeros((n,) + shape)
        s[j] = 1.0
        seeds.append(s)
    lifted = tuple(Dual(v, s) for v, s in zip(vals, seeds))
    out = fn(lifted)
    jac = []
    for comp in out:
        _, d = dual_parts(comp)
        d = np.broadcast_to(np.asarray(primal(d), dtype=float), (n,) + shape)
        jac.append([d[j] for j in range(n)])
    return jac


def det2(j):
    return j[0][0] * j[1][1] - j[0][1] * j[1][0]


def jac_det(fn, point):
    """Jacobian determinant of an n-dim map at (arrays of) points."""
    j = jacobian(fn, point)
    n = len(j)
    if n == 1:
        return j[0][0]
    if n == 2:
        return det2(j)
    if n == 3:
        return (j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
                - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
                + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]))
    raise ValueError("jac_det supports dimensions 1..3")


# ---------------------------------------------------------------------------
# quadrature

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_rule(order: int = 10):
    """Gauss-Legendre nodes/weights on [-1, 1], cached per order."""
    if order not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(order)
        _GL_CACHE[order] = (x, w)
    return _GL_CACHE[order]


_MAX_PANELS = 2 ** 20


def _gl_panel(f, a, b, x, w):
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    acc = 0.0
    for xi, wi in zip(x, w):
        acc = acc + wi * f(mid + half * xi)
    return acc * half


def integrate_1d(f, a: float, b: float, tol: float = 1e-10) -> float:
    """Adaptive composite Gauss-Legendre (order 10) with panel bisection.

    Guarantees ``|result - integral| <= tol * (1 + |result|)`` for piecewise
    smooth integrands; panel ordering is deterministic (leftmost first).
    Raises :class:`NonConvergence` once 2**20 panels have been spent.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0
    x, w = gauss_rule(10)
    coarse = _gl_panel(f, a, b, x, w)
    budget = tol * (1.0 + abs(coarse))
    panels = 0
    total = 0.0
    # stack of (lo, hi, coarse estimate, error budget); left half processed first
    stack = [(a, b, coarse, budget)]
    while stack:
        lo, hi, est, bud = stack.pop()
        panels += 1
        if panels > _MAX_PANELS:
            raise NonConvergence("integrate_1d: panel limit (2^20) reached")
        mid = 0.5 * (lo + hi)
        left = _gl_panel(f, lo, mid, x, w)
        right = _gl_panel(f, mid, hi, x, w)
        fine = left + right
        if abs(fine - est) <= bud or (hi - lo) < 1e-15 * (b - a):
            total += fine
        else:
            stack.append((mid, hi, right, 0.5 * bud))
            stack.append((lo, mid, left, 0.5 * bud))
    return sign * total


def composite_rule(segments, panels_per_segment, order: int = 10):
    """Fixed composite Gauss-Legendre nodes/weights over given segments.

    ``segments`` is a sequence of (lo, hi); each is split into the paired
    number of equal panels.  Returns flat (nodes, weights) arrays.  Used for
    vectorised inner integrals whose accuracy is pinned against
    :func:`integrate_1d` in the test suite.
    """
    x, w = gauss_rule(order)
    nodes, weights = [], []
    for (lo, hi), p in zip(segments, panels_per_segment):
        edges = np.linspace(lo, hi, p + 1)
        for k in range(p):
            mid = 0.5 * (edges[k] + edges[k + 1])
            half = 0.5 * (edges[k + 1] - edges[k])
            nodes.append(mid + half * x)
            weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


def integrate_fixed(f, nodes, weights):
    """Sum ``f(nodes) @ weights`` where f may return dual/array lanes.

    The integrand receives the flat node vector and must broadcast its own
    lanes against it (last axis = nodes).
    """
    vals = f(nodes)
    return _wsum(vals, weights)


def _wsum(vals, weights):
    if isinstance(vals, Dual):
        return Dual(_wsum(vals.value, weights), _wsum(vals.deriv, weights))
    v = np.asarray(vals, dtype=float)
    if v.ndim == 0:
        return v * weights.sum()
    if v.shape[-1] == weights.shape[0]:
        return v @ weights
    if v.shape[-1] == 1:
        # node axis never materialised (constant across nodes)
        return v[..., 0] * weights.sum()
    raise ValueError(f"integrand lanes {v.shape} do not match rule size {weights.shape}")


def integrate_to(f, a, b, panels: int = 8, order: int = 10):
    """Cumulative integral ``int_a^b f`` with per-lane limits.

    ``a``/``b`` may be scalars, arrays of lanes, or duals.  Dual limits are
    handled by the fundamental theorem (d/db of the integral is f(b)), so
    derivative lanes cost one integrand evaluation instead of riding through
    every quadrature node.
    """
    if isinstance(a, Dual) or isinstance(b, Dual):
        # fundamental theorem for the limit lanes; the boundary term lives at
        # the same dual level as the limits, so it merges with derivative
        # lanes the integrand contributed (it does not nest above them)
        av, ad = dual_parts(a)
        bv, bd = dual_parts(b)
        base = integrate_to(f, av, bv, panels, order)
        bnd = 0.0
        if isinstance(b, Dual):
            bnd = bnd + np.asarray(primal(f(bv)), dtype=float) * bd
        if isinstance(a, Dual):
            bnd = bnd - np.asarray(primal(f(av)), dtype=float) * ad
        return base + Dual(0.0, bnd)
    x, w = gauss_rule(order)
    # reference nodes on [0, 1]
    edges = np.linspace(0.0, 1.0, panels + 1)
    ref = np.concatenate([0.5 * (edges[k] + edges[k + 1])
                          + 0.5 / panels * x for k in range(panels)])
    refw = np.tile(0.5 / panels * w, panels)
    span = b - a
    t = outer_add(a, outer_mul(span, ref))
    vals = f(t)
    return _wsum(vals, refw) * span


def outer_mul(u, nodes):
    """``u[..., None] * nodes`` with dual lanes preserved (nodes plain 1-d)."""
    if isinstance(u, Dual):
        return Dual(outer_mul(u.value, nodes), outer_mul(u.deriv, nodes))
    return np.asarray(u)[..., None] * nodes


def outer_add(u, t):
    """``u[..., None] + t`` where ``t`` carries the trailing node axis."""
    if isinstance(u, Dual) or isinstance(t, Dual):
        uv, ud = dual_parts(u)
        tv, td = dual_parts(t)
        return Dual(outer_add(uv, tv), outer_add(ud, td))
    return np.asarray(u)[..., None] + np.asarray(t)


class Cheb1D:
    """Validated Chebyshev proxy of a smooth 1-d function with closed-form
    antiderivative.

    The degree is raised until the interpolant matches the function at probe
    points to the requested tolerance (construction fails otherwise), so the
    proxy is certified rather than assumed.  Evaluation is generic over
    lanes/duals via a Clenshaw recurrence; outside [lo, hi] both value and
    antiderivative continue linearly, keeping cumulative integrals strictly
    monotone for positive integrands.
    """

    def __init__(self, fn, lo: float, hi: float, tol: float = 1e-12,
                 degrees=(32, 64, 128, 256, 512)):
        self.lo = lo
        self.hi = hi

        def plain(t):
            # constant integrands may collapse to scalars; keep lane shape
            v = np.asarray(primal(fn(t)), dtype=float)
            return np.broadcast_to(v, np.shape(t)).copy() if np.shape(t) else v

        last_err = None
        for deg in degrees:
            series = np.polynomial.chebyshev.Chebyshev.interpolate(
                plain, deg, domain=[lo, hi])
            probes = np.linspace(lo, hi, 2 * deg + 17)
            ref = plain(probes)
            scale = max(1.0, float(np.max(np.abs(ref))))
            last_err = float(np.max(np.abs(series(probes) - ref))) / scale
            if last_err <= tol:
                break
        else:
            raise NonConvergence(
                f"Cheb1D: proxy error {last_err:.3e} above {tol:.1e} at degree "
                f"{degrees[-1]}")
        self.fit_error = last_err
        self.coef = series.coef
        anti = series.integ()
        self.anti_coef = anti.coef
        self.val_lo = float(series(lo))
        self.val_hi = float(series(hi))
        self.anti_lo = float(anti(lo))
        self.anti_hi = float(anti(hi))

    def _scaled(self, x):
        return (2.0 * x - (self.lo + self.hi)) / (self.hi - self.lo)

    def value(self, x):
        xv = primal(x)
        xc = _clip_plain(x, self.lo, self.hi)
        core = _clenshaw(self.coef, self._scaled(xc))
        return where(xv > self.hi, self.val_hi + 0.0 * core,
                     where(xv < self.lo, self.val_lo + 0.0 * core, core))

    def integral(self, a: float, x):
        """int_a^x of the proxy, linear beyond the fitted interval."""
        xv = primal(x)
        xc = _clip_plain(x, self.lo, self.hi)
        core = _clenshaw(self.anti_coef, self._scaled(xc))
        up = self.anti_hi + (x - self.hi) * self.val_hi
        down = self.anti_lo + (x - self.lo) * self.val_lo
        at_x = where(xv > self.hi, up, where(xv < self.lo, down, core))
        base = _clenshaw(self.anti_coef, self._scaled(np.asarray(a, dtype=float)))
        return at_x - base


def _clenshaw(coef, u):
    b1 = 0.0
    b2 = 0.0
    for c in coef[:0:-1]:
        b1, b2 = c + 2.0 * u * b1 - b2, b1
    return coef[0] + u * b1 - b2


class CumulativeCache:
    """Cached cumulative integral of a fixed 1-d integrand.

    Panel integrals over [lo, hi] are tabulated once; evaluation sums full
    panels from the table and integrates the partial panel on the fly.
    Derivative lanes of dual arguments use the fundamental theorem, so the
    value is smooth across panel edges.  Arguments are clipped to [lo, hi].
    """

    def __init__(self, fn, lo: float, hi: float, panels: int = 8):
        self.fn = fn
        self.lo = lo
        self.hi = hi
        self.edges = np.linspace(lo, hi, panels + 1)
        vals = [float(primal(integrate_to(fn, self.edges[k], self.edges[k + 1],
                                          panels=2)))
                for k in range(panels)]
        self.cum = np.concatenate([[0.0], np.cumsum(vals)])
        # linear continuation beyond the table keeps the cumulative strictly
        # monotone for positive integrands (no artificial plateaus)
        self.slope_lo = float(np.asarray(primal(fn(np.asarray(lo)))))
        self.slope_hi = float(np.asarray(primal(fn(np.asarray(hi)))))

    def __call__(self, x):
        if isinstance(x, Dual):
            xv = x.value
            return Dual(self(xv), self.fn(_clip_plain(xv, self.lo, self.hi)) * x.deriv)
        xv = np.asarray(x, dtype=float)
        xc = np.clip(xv, self.lo, self.hi)
        idx = np.clip(np.searchsorted(self.edges, xc, side="right") - 1,
                      0, len(self.edges) - 2)
        base = self.cum[idx]
        lo = self.edges[idx]
        core = base + integrate_to(self.fn, lo, xc, panels=2)
        return (core
                + np.where(xv > self.hi, (xv - self.hi) * self.slope_hi, 0.0)
                + np.where(xv < self.lo, (xv - self.lo) * self.slope_lo, 0.0))


def _clip_plain(x, lo, hi):
    if isinstance(x, Dual):
        return Dual(_clip_plain(x.value, lo, hi), x.deriv)
    return np.clip(np.asarray(x, dtype=float), lo, hi)


# ---------------------------------------------------------------------------
# safeguarded root finding

def solve_monotone(f, target: float, lo: float, hi: float,
                   tol: float = 1e-12, df=None, max_iter: int = 200) -> float:
    """Solve ``f(x) = target`` for strictly monotone ``f`` on [lo, hi].

    Newton steps (slope from ``df`` when given, secant otherwise) are
    safeguarded by bisection: any step that leaves the bracket or fails to
    shrink the residual by 10% falls back to a bisection step, so
    convergence is guaranteed.  Raises :class:`NoBracket` when the endpoint
    values do not straddle the target and :class:`NonMonotone` when an
    evaluation contradicts the monotone ordering of the current bracket.
    """
    if not (hi > lo):
        raise NoBracket(f"empty bracket [{lo}, {hi}]")
    flo = f(lo) - target
    fhi = f(hi) - target
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        raise NoBracket(f"f values at bracket ends do not straddle target "
                        f"({flo + target} vs {fhi + target}, target {target})")
    increasing = fhi > flo
    slack = 1e-9 * (abs(flo) + abs(fhi)) + 1e-300
    x = 0.5 * (lo + hi)
    prev_res = abs(flo) + abs(fhi)
    for _ in range(max_iter):
        fx = f(x) - target
        if increasing:
            if fx < flo - slack or fx > fhi + slack:
                raise NonMonotone("derivative sign flip detected inside bracket")
        else:
            if fx > flo + slack or fx < fhi - slack:
                raise NonMonotone("derivative sign flip detected inside bracket")
        if abs(fx) <= tol:
            return x
        # maintain bracket
        if (fx > 0.0) == increasing:
            hi, fhi = x, fx
        else:
            lo, flo = x, fx
        slope = None
        if df is not None:
            slope = df(x)
        if slope is None or slope == 0.0:
            slope = (fhi - flo) / (hi - lo)
        step_ok = False
        if slope != 0.0:
            xn = x - fx / slope
            if lo < xn < hi and abs(fx) <= 0.9 * prev_res:
                x = xn
                step_ok = True
        if not step_ok:
            x = 0.5 * (lo + hi)
        prev_res = abs(fx)
        if hi - lo < 1e-16 * (1.0 + abs(lo) + abs(hi)):
            return x
    raise NonConvergence("solve_monotone: iteration limit")


def solve_monotone_batch(f, target, lo, hi, tol: float = 1e-12,
                         max_iter: int = 200):
    """Vectorised safeguarded Newton/bisection for lanes of monotone solves.

    ``f`` maps an array of abscissae to an array of values; ``target``,
    ``lo`` and ``hi`` are arrays of the same shape.  Secant slopes from the
    running bracket drive the Newton step; out-of-bracket or slow lanes
    bisect.  All lanes must converge within ``max_iter``.
    """
    target = np.asarray(target, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()
    flo = f(lo) - target
    fhi = f(hi) - target
    if np.any(flo * fhi > 0.0):
        bad = int(np.sum(flo * fhi > 0.0))
        raise NoBracket(f"{bad} lanes do not straddle the target")
    increasing = fhi >= flo
    x = 0.5 * (lo + hi)
    prev = np.abs(flo) + np.abs(fhi)
    for _ in range(max_iter):
        fx = f(x) - target
        if np.all(np.abs(fx) <= tol):
            return x
        pos = (fx > 0.0) == increasing
        hi = np.where(pos, x, hi)
        fhi = np.where(pos, fx, fhi)
        lo = np.where(pos, lo, x)
        flo = np.where(pos, flo, fx)
        width = hi - lo
        slope = np.where(width > 0, (fhi - flo) / np.where(width > 0, width, 1.0), 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - fx / slope
        good = np.isfinite(xn) & (xn > lo) & (xn < hi) & (np.abs(fx) <= 0.9 * prev)
        x = np.where(good, xn, 0.5 * (lo + hi))
        prev = np.abs(fx)
    raise NonConvergence("solve_monotone_batch: iteration limit")


# ---------------------------------------------------------------------------
# flows

class TimeField:
    """Time-dependent vector field ``eval(t, x) -> vector`` on [0, 1].

    ``dim`` is the spatial dimension; ``box`` (optional) is a list of
    (lo, hi) bounds per coordinate used to detect trajectories escaping the
    declared domain.
    """

    def __init__(self, dim: int, fn, box=None):
        self.dim = dim
        self.fn = fn
        self.box = box

    def eval(self, t, x):
        return self.fn(t, x)


# Fehlberg 4(5) embedded pair
_RKF_C = (0.0, 0.25, 3.0 / 8.0, 12.0 / 13.0, 1.0, 0.5)
_RKF_A = (
    (),
    (0.25,),
    (3.0 / 32.0, 9.0 / 32.0),
    (1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0),
    (439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0),
    (-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0),
)
_RKF_B5 = (16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0,
           -9.0 / 50.0, 2.0 / 55.0)
# b5 - b4, the local truncation estimate of the order-4 companion
_RKF_E = (1.0 / 360.0, 0.0, -128.0 / 4275.0, -2197.0 / 75240.0,
          1.0 / 50.0, 2.0 / 55.0)

_MAX_STEPS = 10 ** 6


def flow_ode(field: TimeField, x0, tol: float = 1e-10):
    """Time-1 flow of ``field`` from ``x0`` with embedded 4(5) step control.

    Integrates ``dx/dt = field.eval(t, x)`` from t=0 to t=1.  Components of
    ``x0`` may be floats, arrays (lanes integrated together under a shared
    step sequence driven by the worst lane) or duals (derivatives ride
    through the integrator).  Absolute and relative tolerances both equal
    ``tol``.
    """
    dim = field.dim
    x = list(x0)
    if len(x) != dim:
        raise ValueError(f"x0 has {len(x)} components, field.dim = {dim}")
    t = 0.0
    h = 0.05
    steps = 0
    while t < 1.0:
        remaining = 1.0 - t
        if remaining <= 1e-14:
            break
        if steps >= _MAX_STEPS:
            raise NonConvergence("flow_ode: step limit")
        if h < 1e-14:
            raise StepUnderflow(f"flow_ode: step size underflow at t={t}")
        h = min(h, remaining)
        ks = []
        for s in range(6):
            xs = x
            if s:
                xs = [x[i] + h * _sumk(ks, _RKF_A[s], i) for i in range(dim)]
            ks.append(field.eval(t + _RKF_C[s] * h, tuple(xs)))
        x5 = [x[i] + h * _sumk(ks, _RKF_B5, i) for i in range(dim)]
        errnorm = 0.0
        for i in range(dim):
            e = h * _sumk(ks, _RKF_E, i)
            scale = tol + tol * np.maximum(np.abs(primal(x[i])),
                                           np.abs(primal(x5[i])))
            errnorm = max(errnorm, float(np.max(np.abs(primal(e)) / scale)))
        steps += 1
        if errnorm <= 1.0:
            t += h
            x = x5
            if field.box is not None:
                for i, (blo, bhi) in enumerate(field.box):
                    v = primal(x[i])
                    if np.any(v < blo) or np.any(v > bhi):
                        raise DomainEscape(
                            f"flow_ode: coordinate {i} left [{blo}, {bhi}]")
        if errnorm == 0.0:
            h *= 5.0
        else:
            h *= min(5.0, max(0.2, 0.9 * errnorm ** -0.2))
    return tuple(x)


def _sumk(ks, coeffs, i):
    acc = 0.0
    for k, c in zip(ks, coeffs):
        if c != 0.0:
            acc = acc + c * k[i]
    return acc


def hamiltonian_field(H) -> TimeField:
    """Autonomous field (dH/dy, -dH/dx) whose flow preserves area.

    ``H`` is a scalar field on the plane with first partials.  The flow of
    the returned field is used as an exactly-symplectic fixture generator by
    the verification suite.
    """
    def fn(t, x):
        return (H.partial(2, x), -H.partial(1, x))
    return TimeField(2, fn)
