"""Phase transition threshold, ordered branch, and stationary states.

The noise intensity D controls a pitchfork: above the critical value
D* only the isotropic state exists; below it a polarized branch with
mean speed u(D) > 0 appears.  D* is the unique root of the fused
moment integral h_d(D), bracketed a priori in (1/(d+2), 1/d).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import specfun
from .errors import BracketError
from .quadrature import (
    DEFAULT_SETTINGS,
    ModelParams,
    QuadratureSettings,
    StationaryMoments,
    H_of_u,
    h_function,
    log_j,
    log_partition,
    potential,
    stationary_moments,
)

__all__ = [
    "StationaryState",
    "BifurcationPoint",
    "ClosedFormCheck",
    "QualitativeReport",
    "critical_noise",
    "order_parameter",
    "make_stationary",
    "kappa",
    "eta",
    "axis_second_moment",
    "bifurcation_curve",
    "special_function_check",
    "critical_noise_qualitative_suite",
]

RESIDUAL_TOL = 1e-8
ROOT_TOL = 1e-12


def critical_noise(d: int, alpha: float,
                   settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """Unique root D* of h_d in the open interval (1/(d+2), 1/d)."""
    lo = 1.0 / (d + 2) * (1.0 + 1e-9)
    hi = 1.0 / d * (1.0 - 1e-9)
    f_lo = h_function(ModelParams(d=d, alpha=alpha, D=lo), settings)
    f_hi = h_function(ModelParams(d=d, alpha=alpha, D=hi), settings)
    if not (f_lo > 0 > f_hi):
        raise BracketError(
            f"h_{d} does not change sign on ({lo:.6g}, {hi:.6g}): "
            f"h({lo:.6g})={f_lo:.3e}, h({hi:.6g})={f_hi:.3e}")
    return brentq(
        lambda D: h_function(ModelParams(d=d, alpha=alpha, D=D), settings),
        lo, hi, xtol=ROOT_TOL, rtol=8.9e-16)


def order_parameter(params: ModelParams,
                    settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """Mean speed u(D) of the polarized branch; 0 at or above D*.

    The root of H is bracketed from below by a value small enough that
    H still carries the sign of h_d there, and from above by doubling.
    """
    dstar = critical_noise(params.d, params.alpha, settings)
    if params.D >= dstar:
        return 0.0
    lo = 1e-8
    if H_of_u(lo, params, settings) <= 0.0:
        # indistinguishable from the critical point at this resolution
        return 0.0
    hi = 1.0
    while H_of_u(hi, params, settings) >= 0.0:
        hi *= 2.0
        if hi > 512.0:
            raise BracketError("order parameter: no sign change below u=512")
    return brentq(lambda u: H_of_u(u, params, settings), lo, hi,
                  xtol=ROOT_TOL, rtol=8.9e-16)


@dataclass(frozen=True)
class StationaryState:
    """A stationary density f_u together with its cached moments.

    residual is |mean(f_u) - u|, the self-consistency defect of the
    computed root.
    """

    params: ModelParams
    branch: str                 # "isotropic" or "polarized"
    u: float
    moments: StationaryMoments
    log_normalization: float
    residual: float

    def log_pdf_line(self, v):
        """log f_u(v) on the line (d = 1)."""
        if self.params.d != 1:
            raise ValueError("log_pdf_line requires d = 1")
        v = np.asarray(v, dtype=float)
        return ((self.u * v - potential(np.abs(v), self.params))
                / self.params.D - self.log_normalization)

    def log_pdf_polar(self, s, theta):
        """log f_u at speed s and angle theta from the order axis (d >= 2)."""
        if self.params.d < 2:
            raise ValueError("log_pdf_polar requires d >= 2")
        s = np.asarray(s, dtype=float)
        ct = np.cos(np.asarray(theta, dtype=float))
        return ((self.u * s * ct - potential(s, self.params))
                / self.params.D - self.log_normalization)


def make_stationary(params: ModelParams, branch: str = "auto",
                    settings: QuadratureSettings = DEFAULT_SETTINGS,
                    residual_tol: float = RESIDUAL_TOL) -> StationaryState:
    """Construct the isotropic or polarized stationary state.

    branch "auto" selects polarized below D* and isotropic otherwise;
    requesting "polarized" at D >= D* is an error.
    """
    if branch not in ("auto", "isotropic", "polarized"):
        raise ValueError(f"unknown branch {branch!r}")
    if branch == "isotropic":
        u = 0.0
    else:
        u = order_parameter(params, settings)
        if branch == "polarized" and u == 0.0:
            raise ValueError(
                f"no polarized branch at D={params.D}: at or above the "
                "critical noise")
        if branch == "auto" and u == 0.0:
            branch = "isotropic"
    if u > 0.0:
        branch = "polarized"
    moments = stationary_moments(u, params, settings)
    residual = abs(moments.v1 - u)
    if residual > residual_tol * max(1.0, u):
        raise BracketError(
            f"stationary state self-consistency residual {residual:.3e} "
            f"exceeds {residual_tol:.1e}")
    return StationaryState(
        params=params, branch=branch, u=u, moments=moments,
        log_normalization=log_partition(u, params, settings),
        residual=residual)


def kappa(state: StationaryState) -> float:
    """Longitudinal variance of f_u divided by D; in (0, 1) on the branch."""
    m = state.moments
    var1 = m.v1_sq - 2.0 * state.u * m.v1 + state.u**2
    return var1 / state.params.D


def axis_second_moment(params: ModelParams,
                       settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """Second moment of one coordinate under the isotropic state.

    Equals j_{d+1} / (d j_{d-1}); drops below D exactly when D exceeds
    the critical noise.
    """
    return math.exp(log_j(params.d + 1, params, settings)
                    - log_j(params.d - 1, params, settings)) / params.d


def eta(params: ModelParams,
        settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """Stability modulus of the isotropic state: alpha * C * |h_d|.

    C = j_{d+1} / (d j_{d-1})^2; algebraically eta = mbar (D - mbar)
    with mbar the axis second moment, which the tests cross-check.
    """
    h = h_function(params, settings)
    if h == 0.0:
        return 0.0
    log_c = (log_j(params.d + 1, params, settings)
             - 2.0 * log_j(params.d - 1, params, settings))
    return (params.alpha / params.d**2) * math.exp(log_c) * abs(h)


@dataclass(frozen=True)
class BifurcationPoint:
    D: float
    branch: str
    u: float
    residual: float
    kappa: float | None
    eta: float | None


def bifurcation_curve(d: int, alpha: float, D_values,
                      settings: QuadratureSettings = DEFAULT_SETTINGS
                      ) -> list[BifurcationPoint]:
    """Both branches over a noise sweep.

    Every D gets an isotropic point (eta filled above D*); values below
    D* get a polarized point as well (kappa filled there).
    """
    dstar = critical_noise(d, alpha, settings)
    points = []
    for D in D_values:
        params = ModelParams(d=d, alpha=alpha, D=float(D))
        iso = make_stationary(params, branch="isotropic", settings=settings)
        points.append(BifurcationPoint(
            D=params.D, branch="isotropic", u=0.0, residual=iso.residual,
            kappa=None,
            eta=eta(params, settings) if params.D > dstar else None))
        if params.D < dstar:
            pol = make_stationary(params, branch="polarized",
                                  settings=settings)
            points.append(BifurcationPoint(
                D=params.D, branch="polarized", u=pol.u,
                residual=pol.residual, kappa=kappa(pol), eta=None))
    return points


@dataclass(frozen=True)
class ClosedFormCheck:
    supported: bool
    d: int
    alpha: float
    dstar_quadrature: float | None = None
    dstar_closed_form: float | None = None
    difference: float | None = None


def _closed_form_equation(d: int, alpha: float):
    sqrt_pi = math.sqrt(math.pi)
    if d == 1 and alpha == 2.0:
        def eq(D):
            z = 1.0 / (16.0 * D)
            return ((1.0 - 4.0 * D) * specfun.bessel_iv(-0.25, z)
                    + (1.0 + 4.0 * D) * specfun.bessel_iv(0.25, z)
                    + specfun.bessel_iv(0.75, z)
                    + specfun.bessel_iv(1.25, z))
        return eq
    if d == 2 and alpha == 2.0:
        def eq(D):
            x = 1.0 / (8.0 * D)
            return ((8.0 * specfun.upper_gamma(1.5, x) - 8.0 * sqrt_pi) * D
                    - specfun.upper_gamma(0.5, x) + 2.0 * sqrt_pi)
        return eq
    if d == 2 and alpha == 4.0:
        def eq(D):
            x = 9.0 / (16.0 * D)
            return ((16.0 * specfun.upper_gamma(1.5, x) - 16.0 * sqrt_pi) * D
                    - 8.0 * specfun.upper_gamma(1.0, x) * math.sqrt(D)
                    + 6.0 * sqrt_pi - 3.0 * specfun.upper_gamma(0.5, x))
        return eq
    return None


def special_function_check(d: int, alpha: float,
                           settings: QuadratureSettings = DEFAULT_SETTINGS
                           ) -> ClosedFormCheck:
    """Cross-check D* against its Bessel/incomplete-gamma closed form.

    Supported at (d, alpha) in {(1, 2), (2, 2), (2, 4)}; elsewhere the
    report is marked unsupported.
    """
    eq = _closed_form_equation(d, float(alpha))
    if eq is None:
        return ClosedFormCheck(supported=False, d=d, alpha=float(alpha))
    lo = 1.0 / (d + 2) * (1.0 + 1e-9)
    hi = 1.0 / d * (1.0 - 1e-9)
    closed = brentq(eq, lo, hi, xtol=ROOT_TOL, rtol=8.9e-16)
    quadr = critical_noise(d, alpha, settings)
    return ClosedFormCheck(
        supported=True, d=d, alpha=float(alpha),
        dstar_quadrature=quadr, dstar_closed_form=closed,
        difference=abs(quadr - closed))


@dataclass(frozen=True)
class QualitativeReport:
    """Outcome of the structural checks on D*(d, alpha)."""

    d_values: tuple
    alpha_values: tuple
    dstar: dict                     # (d, alpha) -> D*
    bounds_ok: bool
    d_monotone_ok: bool
    alpha_monotone_ok: bool
    upper_limit_ok: bool            # large alpha approaches 1/d
    violations: tuple


def critical_noise_qualitative_suite(
        d_values=(1, 2, 3), alpha_values=(0.25, 1.0, 2.0, 4.0, 16.0),
        settings: QuadratureSettings = DEFAULT_SETTINGS) -> QualitativeReport:
    """Bounds, monotonicity in d and alpha, and the large-alpha limit."""
    table = {}
    violations = []
    for d in d_values:
        for a in alpha_values:
            table[(d, a)] = critical_noise(d, a, settings)

    bounds_ok = True
    for (d, a), v in table.items():
        if not (1.0 / (d + 2) < v < 1.0 / d):
            bounds_ok = False
            violations.append(f"bounds: D*({d},{a})={v:.6f}")

    d_monotone_ok = True
    for a in alpha_values:
        for i in range(len(d_values) - 1):
            if not table[(d_values[i], a)] > table[(d_values[i + 1], a)]:
                d_monotone_ok = False
                violations.append(f"d-monotone at alpha={a}")

    alpha_monotone_ok = True
    for d in d_values:
        for i in range(len(alpha_values) - 1):
            if not table[(d, alpha_values[i])] < table[(d, alpha_values[i + 1])]:
                alpha_monotone_ok = False
                violations.append(f"alpha-monotone at d={d}")

    # stiff alignment pushes the threshold toward its upper bound 1/d
    big = critical_noise(2, 100.0, settings)
    upper_limit_ok = 0.45 < big < 0.5
    if not upper_limit_ok:
        violations.append(f"upper limit: D*(2,100)={big:.6f}")

    return QualitativeReport(
        d_values=tuple(d_values), alpha_values=tuple(alpha_values),
        dstar=table, bounds_ok=bounds_ok, d_monotone_ok=d_monotone_ok,
        alpha_monotone_ok=alpha_monotone_ok, upper_limit_ok=upper_limit_ok,
        violations=tuple(violations))
