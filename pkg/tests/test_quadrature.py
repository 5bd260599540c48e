"""Radial moment layer against scipy.integrate and closed forms.

Every quantity with an independent route (scipy adaptive quadrature,
special-function identities, elementary antiderivatives) is checked
against that route here.
"""

import math

import numpy as np
import pytest
from scipy import integrate
from scipy import special as sp

from flocklab import (
    ModelParams,
    H_of_u,
    H_prime_at_zero,
    gauss_kronrod,
    h_function,
    j_moment,
    log_partition,
    potential,
    sphere_area,
    stationary_moments,
)
from flocklab.quadrature import (
    angular_kernel,
    angular_kernel_deriv,
    log_angular_kernel,
    truncation_radius,
)

GRID = [ModelParams(d, a, D)
        for d in (1, 2, 3)
        for a in (0.5, 2.0)
        for D in (0.3, 0.9)]


def scipy_j(n, p):
    val, _ = integrate.quad(
        lambda s: s**n * math.exp(-potential(s, p) / p.D),
        0.0, np.inf, epsabs=1e-14, epsrel=1e-12)
    return val


# ---------------------------------------------------------------- panels

def test_gauss_kronrod_smooth():
    for f, a, b in [(np.exp, 0.0, 3.0),
                    (lambda x: 1.0 / (1.0 + 25.0 * x * x), -1.0, 1.0),
                    (lambda x: np.sin(20.0 * x), 0.0, 2.0)]:
        ours, err = gauss_kronrod(f, a, b)
        ref, _ = integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-12)
        assert ours == pytest.approx(ref, rel=1e-12, abs=1e-13)
        assert err < 1e-9


def test_gauss_kronrod_error_estimate_is_bound():
    f = lambda x: np.exp(-x * x) * np.cos(3.0 * x)
    ours, err = gauss_kronrod(f, -4.0, 4.0)
    ref, _ = integrate.quad(f, -4.0, 4.0, epsabs=1e-15)
    assert abs(ours - ref) <= max(err, 1e-13)


# -------------------------------------------------------------- j moments

@pytest.mark.parametrize("n", [0, 1, 4, 7])
@pytest.mark.parametrize("p", GRID, ids=lambda p: f"d{p.d}a{p.alpha}D{p.D}")
def test_j_moment_matches_scipy(n, p):
    assert j_moment(n, p) == pytest.approx(scipy_j(n, p), rel=1e-10)


def test_j_moment_pure_quartic_closed_form():
    # alpha = 1 kills the quadratic term; substituting t = s^4/(4D) gives
    # j_n = (4D)^{(n+1)/4} Gamma((n+1)/4) / 4 exactly.
    for D in (0.25, 0.7, 1.3):
        p = ModelParams(1, 1.0, D)
        for n in range(8):
            ref = (4.0 * D) ** ((n + 1) / 4.0) * math.gamma((n + 1) / 4.0) / 4.0
            assert j_moment(n, p) == pytest.approx(ref, rel=1e-11)


@pytest.mark.parametrize("p", GRID, ids=lambda p: f"d{p.d}a{p.alpha}D{p.D}")
def test_j_moment_parts_identity(p):
    # alpha j_{n+4} + (1 - alpha) j_{n+2} = (n + 1) D j_n
    for n in range(11):
        lhs = p.alpha * j_moment(n + 4, p) + (1.0 - p.alpha) * j_moment(n + 2, p)
        rhs = (n + 1) * p.D * j_moment(n, p)
        assert lhs == pytest.approx(rhs, rel=1e-10)


@pytest.mark.parametrize("p", GRID, ids=lambda p: f"d{p.d}a{p.alpha}D{p.D}")
def test_j_moment_square_combination_positive(p):
    # j_{n+5} - 2 j_{n+3} + j_{n+1} integrates s^{n+1} (s^2-1)^2 >= 0
    for n in range(7):
        combo = j_moment(n + 5, p) - 2.0 * j_moment(n + 3, p) + j_moment(n + 1, p)
        direct, _ = integrate.quad(
            lambda s: s**(n + 1) * (s * s - 1.0)**2
            * math.exp(-potential(s, p) / p.D),
            0.0, np.inf, epsabs=1e-14, epsrel=1e-12)
        assert combo > 0.0
        assert combo == pytest.approx(direct, rel=1e-9)


# ------------------------------------------------------------- h function

@pytest.mark.parametrize("p", GRID, ids=lambda p: f"d{p.d}a{p.alpha}D{p.D}")
def test_h_equals_moment_difference(p):
    ref = j_moment(p.d + 1, p) - j_moment(p.d + 3, p)
    assert h_function(p) == pytest.approx(ref, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("p", GRID, ids=lambda p: f"d{p.d}a{p.alpha}D{p.D}")
def test_h_scaled_identity(p):
    # alpha h = j_{d+1} - d D j_{d-1} via the parts identity at n = d - 1
    lhs = p.alpha * h_function(p)
    rhs = j_moment(p.d + 1, p) - p.d * p.D * j_moment(p.d - 1, p)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-14)


def test_h_sign_at_bracket_edges():
    for d in (1, 2, 3):
        for alpha in (0.5, 2.0, 8.0):
            assert h_function(ModelParams(d, alpha, 1.0 / (d + 2))) > 0.0
            assert h_function(ModelParams(d, alpha, 1.0 / d)) < 0.0


# ---------------------------------------------------------- angular kernel

def test_angular_kernel_d2_is_bessel():
    # int_0^{pi/2} cos(t) sinh(x cos t) dt = (pi/2) I_1(x)
    for x in (0.1, 1.0, 7.0, 40.0):
        assert angular_kernel(x, 2) == pytest.approx(
            0.5 * math.pi * float(sp.iv(1, x)), rel=1e-11)


def test_log_angular_kernel_d2_large_argument():
    # log form stays accurate far past the overflow point of e^x
    for x in (300.0, 900.0):
        ref = math.log(0.5 * math.pi * float(sp.ive(1, x))) + x
        assert log_angular_kernel(x, 2) == pytest.approx(ref, rel=1e-12)


def test_angular_kernel_d3_elementary():
    # d = 3: int_0^1 c sinh(x c) dc = cosh(x)/x - sinh(x)/x^2
    for x in (0.2, 2.0, 15.0):
        ref = math.cosh(x) / x - math.sinh(x) / x**2
        assert angular_kernel(x, 3) == pytest.approx(ref, rel=1e-11)


def test_angular_kernel_deriv_d3_elementary():
    for x in (0.2, 2.0, 15.0):
        ref = (math.sinh(x) / x - 2.0 * math.cosh(x) / x**2
               + 2.0 * math.sinh(x) / x**3)
        assert angular_kernel_deriv(x, 3) == pytest.approx(ref, rel=1e-11)


def test_angular_kernel_deriv_matches_finite_difference():
    h = 1e-6
    for d in (2, 4):
        for x in (0.5, 3.0):
            fd = (angular_kernel(x + h, d) - angular_kernel(x - h, d)) / (2 * h)
            assert angular_kernel_deriv(x, d) == pytest.approx(fd, rel=1e-7)


def test_angular_kernel_odd_and_zero():
    assert angular_kernel(0.0, 2) == 0.0
    assert angular_kernel(-3.0, 2) == pytest.approx(-angular_kernel(3.0, 2))


# -------------------------------------------------------- consistency H(u)

def scipy_H(u, p):
    if p.d == 1:
        val, _ = integrate.quad(
            lambda v: v * (1.0 - v * v)
            * math.exp((u * v - potential(abs(v), p)) / p.D),
            -np.inf, np.inf, epsabs=1e-14, epsrel=1e-12)
        return p.alpha * val
    # d = 2: polar coordinates, inner angular factor integrated explicitly
    val, _ = integrate.dblquad(
        lambda t, s: s**2 * (1.0 - s * s) * math.cos(t)
        * math.exp((u * s * math.cos(t) - potential(s, p)) / p.D),
        0.0, 30.0, 0.0, math.pi, epsabs=1e-13, epsrel=1e-11)
    return p.alpha * sphere_area(0) * val


@pytest.mark.parametrize("d", [1, 2])
def test_H_matches_scipy_nested(d):
    p = ModelParams(d, 2.0, 0.3)
    for u in (0.2, 0.8):
        assert H_of_u(u, p) == pytest.approx(scipy_H(u, p), rel=1e-8)


def test_H_odd_in_u():
    p = ModelParams(2, 2.0, 0.4)
    assert H_of_u(-0.5, p) == -H_of_u(0.5, p)


def test_H_prime_at_zero_matches_finite_difference():
    for d in (1, 2, 3):
        p = ModelParams(d, 2.0, 0.5)
        h = 1e-5
        fd = (H_of_u(h, p) - H_of_u(-h, p)) / (2 * h)
        assert H_prime_at_zero(p) == pytest.approx(fd, rel=1e-7)


def test_H_prime_sign_follows_h():
    # slope at the origin changes sign exactly where h does
    for d in (1, 2):
        p_lo = ModelParams(d, 2.0, 1.0 / (d + 2))
        p_hi = ModelParams(d, 2.0, 1.0 / d)
        assert H_prime_at_zero(p_lo) > 0.0
        assert H_prime_at_zero(p_hi) < 0.0


# ----------------------------------------------------- partition + moments

def scipy_log_partition(u, p):
    if p.d == 1:
        val, _ = integrate.quad(
            lambda v: math.exp((u * v - potential(abs(v), p)) / p.D),
            -np.inf, np.inf, epsabs=1e-14, epsrel=1e-12)
        return math.log(val)
    val, _ = integrate.dblquad(
        lambda t, s: s * math.exp(
            (u * s * math.cos(t) - potential(s, p)) / p.D),
        0.0, 30.0, 0.0, math.pi, epsabs=1e-13, epsrel=1e-11)
    return math.log(sphere_area(0) * val)


@pytest.mark.parametrize("d", [1, 2])
def test_log_partition_matches_scipy(d):
    p = ModelParams(d, 2.0, 0.35)
    for u in (0.0, 0.6):
        assert log_partition(u, p) == pytest.approx(
            scipy_log_partition(u, p), rel=1e-9, abs=1e-9)


def scipy_moments_d1(u, p):
    z = math.exp(scipy_log_partition(u, p))

    def avg(w):
        val, _ = integrate.quad(
            lambda v: w(v) * math.exp((u * v - potential(abs(v), p)) / p.D),
            -np.inf, np.inf, epsabs=1e-14, epsrel=1e-12)
        return val / z

    return avg(lambda v: v), avg(lambda v: v * v), avg(lambda v: v**4)


def test_stationary_moments_match_scipy_d1():
    p = ModelParams(1, 2.0, 0.3)
    for u in (0.0, 0.823):
        m = stationary_moments(u, p)
        v1, v2, v4 = scipy_moments_d1(u, p)
        assert m.v1 == pytest.approx(v1, rel=1e-10, abs=1e-12)
        assert m.v1_sq == pytest.approx(v2, rel=1e-10)
        assert m.speed_sq == pytest.approx(v2, rel=1e-10)
        assert m.speed_4 == pytest.approx(v4, rel=1e-10)


def test_stationary_moments_match_scipy_d2():
    p = ModelParams(2, 2.0, 0.25)
    u = 0.65
    z = math.exp(scipy_log_partition(u, p))

    def avg(w):
        val, _ = integrate.dblquad(
            lambda t, s: s * w(s, t) * math.exp(
                (u * s * math.cos(t) - potential(s, p)) / p.D),
            0.0, 30.0, 0.0, math.pi, epsabs=1e-13, epsrel=1e-11)
        return sphere_area(0) * val / z

    m = stationary_moments(u, p)
    assert m.v1 == pytest.approx(avg(lambda s, t: s * math.cos(t)), rel=1e-9)
    assert m.v1_sq == pytest.approx(
        avg(lambda s, t: (s * math.cos(t))**2), rel=1e-9)
    assert m.speed_sq == pytest.approx(avg(lambda s, t: s * s), rel=1e-9)
    assert m.vperp_sq_total == pytest.approx(
        avg(lambda s, t: (s * math.sin(t))**2), rel=1e-9)


def test_isotropic_moments_reduce_to_j_ratios():
    for p in (ModelParams(1, 2.0, 0.6), ModelParams(3, 0.5, 0.4)):
        m = stationary_moments(0.0, p)
        assert m.v1 == pytest.approx(0.0, abs=1e-13)
        ref = j_moment(p.d + 1, p) / j_moment(p.d - 1, p)
        assert m.speed_sq == pytest.approx(ref, rel=1e-11)


def test_truncation_radius_tail_is_negligible():
    p = ModelParams(2, 2.0, 0.3)
    s = truncation_radius(p, u=1.0, max_power=6.0)
    # integrand envelope at the cut is below the absolute tolerance
    env = s**6 * math.exp((1.0 * s - potential(s, p)) / p.D)
    assert env < 1e-14
    assert s >= 3.0
