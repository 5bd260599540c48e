"""Modified Bessel and incomplete gamma functions.

Self-contained implementations used by the closed-form critical-noise
checks, so that those checks do not share code with the quadrature path
they are meant to validate.
"""

from __future__ import annotations

import math

from .errors import ConvergenceError

_MAX_TERMS = 500


def bessel_iv(nu: float, x: float) -> float:
    """Modified Bessel function of the first kind I_nu(x) for x >= 0.

    Power series up to x = 30, uniform asymptotic expansion beyond.
    """
    if x < 0:
        raise ValueError("bessel_iv requires x >= 0")
    if x == 0.0:
        if nu == 0.0:
            return 1.0
        return math.inf if nu < 0 else 0.0
    if x <= 30.0:
        return _iv_series(nu, x)
    return _iv_asymptotic(nu, x)


def _iv_series(nu: float, x: float) -> float:
    half = 0.5 * x
    # leading (x/2)^nu / Gamma(nu+1); go through logs only when needed
    try:
        term = half**nu / math.gamma(nu + 1.0)
    except ValueError:
        # Gamma pole at nonpositive integer nu+1: first nonzero term is k>=1
        term = 0.0
    total = term
    ratio_base = half * half
    k = 0
    if term == 0.0:
        # start the recurrence one step in
        k = 1
        term = half ** (nu + 2.0) / (math.gamma(nu + 2.0))
        total = term
    while k < _MAX_TERMS:
        k += 1
        term *= ratio_base / (k * (nu + k))
        total += term
        if abs(term) <= 1e-17 * abs(total):
            return total
    raise ConvergenceError(f"bessel_iv series stalled at nu={nu}, x={x}")


def _iv_asymptotic(nu: float, x: float) -> float:
    mu = 4.0 * nu * nu
    total = 1.0
    term = 1.0
    for k in range(1, 30):
        term *= -(mu - (2 * k - 1) ** 2) / (8.0 * k * x)
        total += term
        if abs(term) <= 1e-17 * abs(total):
            break
    return math.exp(x) / math.sqrt(2.0 * math.pi * x) * total


def upper_gamma(s: float, x: float) -> float:
    """Upper incomplete gamma Gamma(s, x) = int_x^inf t^{s-1} e^{-t} dt.

    Lower series for x < s + 1, modified Lentz continued fraction
    otherwise; s > 0, x >= 0.
    """
    if s <= 0:
        raise ValueError("upper_gamma requires s > 0")
    if x < 0:
        raise ValueError("upper_gamma requires x >= 0")
    if x == 0.0:
        return math.gamma(s)
    if x < s + 1.0:
        return math.gamma(s) - _lower_gamma_series(s, x)
    return _upper_gamma_cf(s, x)


def _lower_gamma_series(s: float, x: float) -> float:
    # gamma(s,x) = x^s e^-x sum_n x^n / (s (s+1) ... (s+n))
    term = 1.0 / s
    total = term
    for n in range(1, _MAX_TERMS):
        term *= x / (s + n)
        total += term
        if abs(term) <= 1e-17 * abs(total):
            return math.exp(s * math.log(x) - x) * total
    raise ConvergenceError(f"lower gamma series stalled at s={s}, x={x}")


def _upper_gamma_cf(s: float, x: float) -> float:
    # Gamma(s,x) = x^s e^-x / (x + 1 - s - 1(1-s)/(x + 3 - s - ...))
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b if b != 0.0 else 1.0 / tiny
    f = d
    for n in range(1, _MAX_TERMS):
        a = -n * (n - s)
        b += 2.0
        d = a * d + b
        if d == 0.0:
            d = tiny
        c = b + a / c
        if c == 0.0:
            c = tiny
        d = 1.0 / d
        delta = d * c
        f *= delta
        if abs(delta - 1.0) <= 1e-16:
            return math.exp(s * math.log(x) - x) * f
    raise ConvergenceError(f"upper gamma fraction stalled at s={s}, x={x}")
