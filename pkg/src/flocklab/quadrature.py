"""Adaptive quadrature and the radial integrals of the alignment model.

The model couples a quartic confinement with a linear alignment force.
Everything downstream (critical noise, order parameter, stationary
moments) reduces to weighted semi-infinite integrals of

    exp(-phi(s)/D),   phi(s) = (alpha/4) s^4 + ((1-alpha)/2) s^2,

optionally tilted by exp(u s cos(theta)/D).  All integrals here are
evaluated on a truncated interval chosen from the integrand's decay and
are rescaled by the scanned maximum of the log-integrand, so partition
functions and moments stay finite for any parameter regime that fits in
double precision.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import QuadratureError

__all__ = [
    "ModelParams",
    "QuadratureSettings",
    "DEFAULT_SETTINGS",
    "StationaryMoments",
    "gauss_kronrod",
    "potential",
    "potential_prime",
    "sphere_area",
    "truncation_radius",
    "log_j",
    "j_moment",
    "h_function",
    "angular_kernel",
    "log_angular_kernel",
    "angular_kernel_deriv",
    "H_of_u",
    "H_prime_at_zero",
    "log_partition",
    "stationary_moments",
]


@dataclass(frozen=True)
class ModelParams:
    """Dimension d, friction strength alpha, noise intensity D."""

    d: int
    alpha: float
    D: float

    def __post_init__(self):
        if not isinstance(self.d, int) or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d!r}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha!r}")
        if not (self.D > 0 and math.isfinite(self.D)):
            raise ValueError(f"D must be positive and finite, got {self.D!r}")


@dataclass(frozen=True)
class QuadratureSettings:
    """Tolerances and budgets for the adaptive integrator.

    tail_margin is the extra number of e-foldings demanded from the
    integrand at the truncation radius, on top of the absolute
    tolerance; scan_points controls the resolution of the log-integrand
    scan used to pick the rescaling shift.
    """

    rel_tol: float = 1e-11
    abs_tol: float = 1e-14
    max_subdivisions: int = 400
    tail_margin: float = 40.0
    scan_points: int = 1025


DEFAULT_SETTINGS = QuadratureSettings()

# Gauss-Kronrod 7-15 nodes and weights on [-1, 1]
_XGK = np.array([
    0.991455371120813, 0.949107912342759, 0.864864423359769,
    0.741531185599394, 0.586087235467691, 0.405845151377397,
    0.207784955007898, 0.0,
])
_WGK = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728,
])
_WG = np.array([
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469,
])

_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])          # 15 ascending
_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG15 = np.zeros(15)
_WG15[1:-1:2] = np.concatenate([_WG[:-1], _WG[::-1]])      # Gauss subset


def _panel(f, a, b):
    c = 0.5 * (a + b)
    r = 0.5 * (b - a)
    y = f(c + r * _NODES)
    k15 = r * float(np.dot(_WK, y))
    g7 = r * float(np.dot(_WG15, y))
    return k15, abs(k15 - g7)


def gauss_kronrod(f, a: float, b: float, *,
                  settings: QuadratureSettings = DEFAULT_SETTINGS):
    """Adaptive Gauss-Kronrod 7-15 on [a, b] for vectorized f.

    Returns (value, error_estimate); raises QuadratureError when the
    subdivision budget is exhausted before the tolerance is met.
    """
    val, err = _panel(f, a, b)
    heap = [(-err, a, b, val, err)]
    total_val, total_err = val, err
    n = 1
    while total_err > max(settings.abs_tol, settings.rel_tol * abs(total_val)):
        if n >= settings.max_subdivisions:
            raise QuadratureError(
                f"gauss_kronrod: {n} subdivisions, error {total_err:.3e} "
                f"with value {total_val:.6e}")
        _, lo, hi, v_old, e_old = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        v1, e1 = _panel(f, lo, mid)
        v2, e2 = _panel(f, mid, hi)
        total_val += v1 + v2 - v_old
        total_err += e1 + e2 - e_old
        heapq.heappush(heap, (-e1, lo, mid, v1, e1))
        heapq.heappush(heap, (-e2, mid, hi, v2, e2))
        n += 1
    return total_val, total_err


def potential(s, params: ModelParams):
    """Radial confinement phi(s) = alpha/4 s^4 + (1-alpha)/2 s^2."""
    s2 = np.square(s)
    return (params.alpha / 4.0) * s2 * s2 + 0.5 * (1.0 - params.alpha) * s2


def potential_prime(s, params: ModelParams):
    return params.alpha * s**3 + (1.0 - params.alpha) * s


def sphere_area(k: int) -> float:
    """Surface measure of the unit sphere S^k; |S^0| = 2, |S^1| = 2 pi."""
    if k < 0:
        raise ValueError("sphere dimension must be >= 0")
    return 2.0 * math.pi ** ((k + 1) / 2.0) / math.gamma((k + 1) / 2.0)


def truncation_radius(params: ModelParams, *, u: float = 0.0,
                      max_power: float = 8.0,
                      settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """Smallest radius S >= 3 at which every integrand in use is negligible.

    Criterion: phi(S)/D - u S/D - max_power*log(S) exceeds
    log(1/abs_tol) + tail_margin.
    """
    target = math.log(1.0 / settings.abs_tol) + settings.tail_margin
    s = 3.0
    for _ in range(4000):
        depth = (potential(s, params) - abs(u) * s) / params.D \
            - max_power * math.log(s)
        if depth > target:
            return s
        s += 0.25
    raise QuadratureError("truncation radius not found below s = 1000")


def _scan_max(log_env, lo: float, hi: float, n: int) -> float:
    s = np.linspace(lo, hi, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = log_env(s)
    m = np.nanmax(vals[np.isfinite(vals)]) if np.any(np.isfinite(vals)) else 0.0
    return float(m)


def _shifted(log_env, signed_rescaled, lo, hi, settings):
    """Integrate signed_rescaled(s, M) with M = scanned max of log_env.

    Returns (M, value); the true integral is exp(M) * value.
    """
    m = _scan_max(log_env, lo, hi, settings.scan_points)
    val, _ = gauss_kronrod(lambda s: signed_rescaled(s, m), lo, hi,
                           settings=settings)
    return m, val


def log_j(n: float, params: ModelParams,
          settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """log of j_n = int_0^inf s^n exp(-phi(s)/D) ds, n > -1."""
    if n <= -1:
        raise ValueError("log_j requires n > -1")
    hi = truncation_radius(params, max_power=max(n, 8.0), settings=settings)

    def env(s):
        return n * np.log(s) - potential(s, params) / params.D

    def g(s, m):
        with np.errstate(divide="ignore"):
            e = np.where(s > 0, env(np.maximum(s, 1e-300)) - m, -np.inf)
        return np.exp(e)

    m, val = _shifted(env, g, 0.0, hi, settings)
    if val <= 0:
        raise QuadratureError(f"log_j: nonpositive value for n={n}")
    return m + math.log(val)


def j_moment(n: float, params: ModelParams,
             settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    return math.exp(log_j(n, params, settings))


def h_function(params: ModelParams,
               settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """Fused branch indicator h_d = int_0^inf s^{d+1}(1-s^2) exp(-phi/D) ds.

    Positive below the critical noise, negative above; evaluated as a
    single signed integral so the sign change is resolved without
    cancellation between separately-converged pieces.
    """
    d = params.d
    hi = truncation_radius(params, max_power=d + 3.0, settings=settings)

    def env(s):
        with np.errstate(divide="ignore"):
            return ((d + 1) * np.log(s) + np.log(np.abs(1.0 - s * s))
                    - potential(s, params) / params.D)

    def g(s, m):
        base = np.where(
            s > 0,
            np.exp((d + 1) * np.log(np.maximum(s, 1e-300))
                   - potential(s, params) / params.D - m),
            0.0)
        return base * (1.0 - s * s)

    m, val = _shifted(env, g, 0.0, hi, settings)
    return math.exp(m) * val


def log_angular_kernel(x: float, d: int,
                       settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """log of h(x) = int_0^{pi/2} cos(t) sin^{d-2}(t) sinh(x cos t) dt, x > 0.

    Uses sinh(z) = e^z (1 - e^{-2z})/2 so the result stays finite for
    arbitrarily large x.
    """
    if d < 2:
        raise ValueError("angular kernel defined for d >= 2")
    if x < 0:
        raise ValueError("angular kernel evaluated for x >= 0 only")
    if x == 0.0:
        return -math.inf

    def g(t):
        c = np.cos(t)
        body = np.exp(-x * (1.0 - c)) * (-np.expm1(-2.0 * x * c))
        if d > 2:
            body = body * np.sin(t) ** (d - 2)
        return c * body

    val, _ = gauss_kronrod(g, 0.0, 0.5 * math.pi, settings=settings)
    if val <= 0:
        raise QuadratureError(f"log_angular_kernel: nonpositive at x={x}")
    return x - math.log(2.0) + math.log(val)


def angular_kernel(x: float, d: int,
                   settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """h(x) as a float; raises QuadratureError once e^x overflows."""
    if x == 0.0:
        return 0.0
    sign = 1.0
    if x < 0:
        sign, x = -1.0, -x
    lg = log_angular_kernel(x, d, settings)
    if lg > 709.0:
        raise QuadratureError(
            f"angular_kernel overflows at x={x}; use log_angular_kernel")
    return sign * math.exp(lg)


def angular_kernel_deriv(x: float, d: int,
                         settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """h'(x) = int_0^{pi/2} cos^2(t) sin^{d-2}(t) cosh(x cos t) dt."""
    if d < 2:
        raise ValueError("angular kernel defined for d >= 2")
    ax = abs(x)

    def g(t):
        c = np.cos(t)
        body = 0.5 * np.exp(ax * c - ax) * (1.0 + np.exp(-2.0 * ax * c))
        if d > 2:
            body = body * np.sin(t) ** (d - 2)
        return c * c * body

    val, _ = gauss_kronrod(g, 0.0, 0.5 * math.pi, settings=settings)
    if ax > 709.0:
        raise QuadratureError(
            f"angular_kernel_deriv overflows at x={x}")
    return math.exp(ax) * val


def _theta_moment_scaled(x: float, d: int, cos_power: int,
                         settings: QuadratureSettings,
                         sin_sq_weight: bool = False) -> float:
    """exp(-|x|) * int_0^pi cos^m(t) sin^{d-2}(t) e^{x cos t} dt.

    Bounded by pi in magnitude for every x, so the caller can fold
    exp(|x|) into its own log-scaled radial envelope.
    """
    ax = abs(x)

    def g(t):
        c = np.cos(t)
        body = np.exp(x * c - ax)
        if d > 2:
            body = body * np.sin(t) ** (d - 2)
        if sin_sq_weight:
            body = body * np.square(np.sin(t))
        if cos_power:
            body = body * c**cos_power
        return body

    val, _ = gauss_kronrod(g, 0.0, math.pi, settings=settings)
    return val


def H_of_u(u: float, params: ModelParams,
           settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """Self-consistency mismatch H(u); H(u) = 0 picks the ordered branch.

    Odd in u.  d = 1 uses the sinh form on the half line; d >= 2 runs a
    radial integral with an inner angular moment per node.
    """
    if u < 0:
        return -H_of_u(-u, params, settings)
    d, alpha, D = params.d, params.alpha, params.D
    hi = truncation_radius(params, u=u, max_power=d + 3.0, settings=settings)

    if d == 1:
        def env(s):
            z = u * s / D
            with np.errstate(divide="ignore"):
                soft = np.where(z > 0, np.log1p(-np.exp(-2.0 * z)), -np.inf)
            return (np.log(s) + np.log(np.abs(1.0 - s * s))
                    - potential(s, params) / D + z - math.log(2.0) + soft)

        def g(s, m):
            z = u * s / D
            lead = np.where(
                s > 0,
                np.exp(np.log(np.maximum(s, 1e-300))
                       - potential(s, params) / D + z - math.log(2.0) - m),
                0.0)
            return lead * (1.0 - s * s) * (-np.expm1(-2.0 * z))

        m, val = _shifted(env, g, 0.0, hi, settings)
        return 2.0 * alpha * math.exp(m) * val

    area = sphere_area(d - 2)

    def env(s):
        with np.errstate(divide="ignore"):
            return (d * np.log(s) + np.log(np.abs(1.0 - s * s))
                    - potential(s, params) / D + u * s / D)

    def g(s, m):
        s = np.atleast_1d(s)
        lead = np.where(
            s > 0,
            np.exp(d * np.log(np.maximum(s, 1e-300))
                   - potential(s, params) / D + u * s / D - m),
            0.0)
        tm = np.array([_theta_moment_scaled(u * si / D, d, 1, settings)
                       for si in s])
        return lead * (1.0 - s * s) * tm

    m, val = _shifted(env, g, 0.0, hi, settings)
    return alpha * area * math.exp(m) * val


def H_prime_at_zero(params: ModelParams,
                    settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """Slope of H at the origin: alpha |S^{d-1}| h_d / (d D)."""
    return (params.alpha * sphere_area(params.d - 1)
            * h_function(params, settings) / (params.d * params.D))


def log_partition(u: float, params: ModelParams,
                  settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """log of Z(u) = int exp(-(phi(|v|) - u v_1)/D) dv over R^d."""
    d, D = params.d, params.D
    u = abs(u)
    hi = truncation_radius(params, u=u, max_power=d + 3.0, settings=settings)

    if d == 1:
        def env(v):
            return (u * v - potential(np.abs(v), params)) / D

        def g(v, m):
            return np.exp(env(v) - m)

        m, val = _shifted(env, g, -hi, hi, settings)
        return m + math.log(val)

    area = sphere_area(d - 2)

    def env(s):
        with np.errstate(divide="ignore"):
            return ((d - 1) * np.log(s) - potential(s, params) / D
                    + u * s / D)

    def g(s, m):
        s = np.atleast_1d(s)
        lead = np.where(
            s > 0,
            np.exp((d - 1) * np.log(np.maximum(s, 1e-300))
                   - potential(s, params) / D + u * s / D - m),
            0.0)
        tm = np.array([_theta_moment_scaled(u * si / D, d, 0, settings)
                       for si in s])
        return lead * tm

    m, val = _shifted(env, g, 0.0, hi, settings)
    return m + math.log(val) + math.log(area)


@dataclass(frozen=True)
class StationaryMoments:
    """Velocity moments of the normalized tilted Gibbs density.

    v1 is the mean along the order axis; vperp_sq_total sums the
    variance over all d-1 transverse coordinates.
    """

    u: float
    v1: float
    v1_sq: float
    speed_sq: float
    speed_4: float
    vperp_sq_total: float
    d: int = 1

    @property
    def v2_sq(self) -> float:
        """Second moment of a single transverse coordinate (d >= 2)."""
        if self.d < 2:
            raise ValueError("no transverse coordinate in dimension 1")
        return self.vperp_sq_total / (self.d - 1)


def _radial_weighted(params, u, s_power, cos_power, settings,
                     sin_sq_weight=False, extra=None):
    """int_0^inf s^{d-1+p} e^{-phi/D} [angular moment](u s / D) ds, rescaled.

    Returns (shift, value): integral = exp(shift) * value.  extra, if
    given, multiplies the radial integrand pointwise (used for (1-s^2)
    style factors elsewhere).
    """
    d, D = params.d, params.D
    hi = truncation_radius(params, u=abs(u), max_power=d + 3.0 + s_power,
                           settings=settings)
    p = d - 1 + s_power

    def env(s):
        with np.errstate(divide="ignore"):
            return p * np.log(s) - potential(s, params) / D + abs(u) * s / D

    def g(s, m):
        s = np.atleast_1d(s)
        lead = np.where(
            s > 0,
            np.exp(p * np.log(np.maximum(s, 1e-300))
                   - potential(s, params) / D + abs(u) * s / D - m),
            0.0)
        tm = np.array([
            _theta_moment_scaled(u * si / D, d, cos_power, settings,
                                 sin_sq_weight=sin_sq_weight)
            for si in s])
        out = lead * tm
        if extra is not None:
            out = out * extra(s)
        return out

    return _shifted(env, g, 0.0, hi, settings)


def stationary_moments(u: float, params: ModelParams,
                       settings: QuadratureSettings = DEFAULT_SETTINGS
                       ) -> StationaryMoments:
    """Normalized moments of f_u, the Gibbs density tilted by u along e1."""
    d, D = params.d, params.D
    if u < 0:
        raise ValueError("stationary_moments expects u >= 0 (axis convention)")

    if d == 1:
        hi = truncation_radius(params, u=u, max_power=8.0, settings=settings)

        def env(v):
            return (u * v - potential(np.abs(v), params)) / D

        def piece(weight):
            def g(v, m):
                return weight(v) * np.exp(env(v) - m)
            return _shifted(env, g, -hi, hi, settings)

        m0, z = piece(lambda v: np.ones_like(v))
        m1, w1 = piece(lambda v: v)
        m2, w2 = piece(lambda v: v * v)
        m4, w4 = piece(lambda v: v**4)
        v1 = math.exp(m1 - m0) * w1 / z
        v2 = math.exp(m2 - m0) * w2 / z
        v4 = math.exp(m4 - m0) * w4 / z
        return StationaryMoments(u=u, v1=v1, v1_sq=v2, speed_sq=v2,
                                 speed_4=v4, vperp_sq_total=0.0, d=1)

    m0, z = _radial_weighted(params, u, 0, 0, settings)
    m1, w1 = _radial_weighted(params, u, 1, 1, settings)
    m2c, w2c = _radial_weighted(params, u, 2, 2, settings)
    m2, w2 = _radial_weighted(params, u, 2, 0, settings)
    m4, w4 = _radial_weighted(params, u, 4, 0, settings)
    mp, wp = _radial_weighted(params, u, 2, 0, settings, sin_sq_weight=True)
    return StationaryMoments(
        u=u,
        v1=math.exp(m1 - m0) * w1 / z,
        v1_sq=math.exp(m2c - m0) * w2c / z,
        speed_sq=math.exp(m2 - m0) * w2 / z,
        speed_4=math.exp(m4 - m0) * w4 / z,
        vperp_sq_total=math.exp(mp - m0) * wp / z,
        d=d,
    )
