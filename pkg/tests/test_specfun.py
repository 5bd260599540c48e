"""In-repo Bessel-I and upper incomplete gamma against scipy.special."""

import math

import pytest
from scipy import special as sp

from flocklab.specfun import bessel_iv, upper_gamma

ORDERS = [-0.5, -0.25, 0.25, 0.75, 1.0, 1.25, 3.0]
ARGS = [1e-3, 0.5, 5.0, 20.0, 50.0, 200.0]


@pytest.mark.parametrize("nu", ORDERS)
@pytest.mark.parametrize("x", ARGS)
def test_bessel_iv_matches_scipy(nu, x):
    assert bessel_iv(nu, x) == pytest.approx(float(sp.iv(nu, x)), rel=1e-12)


@pytest.mark.parametrize("nu", [0.5, 1.0, 2.5])
@pytest.mark.parametrize("x", [0.3, 4.0, 30.0])
def test_bessel_three_term_recurrence(nu, x):
    lhs = bessel_iv(nu - 1.0, x) - bessel_iv(nu + 1.0, x)
    assert lhs == pytest.approx(2.0 * nu / x * bessel_iv(nu, x), rel=1e-10)


def test_bessel_small_argument_leading_order():
    # I_nu(x) ~ (x/2)^nu / Gamma(nu+1) as x -> 0
    nu, x = 0.75, 1e-6
    lead = (0.5 * x) ** nu / math.gamma(nu + 1.0)
    assert bessel_iv(nu, x) == pytest.approx(lead, rel=1e-6)


@pytest.mark.parametrize("s", [0.5, 1.0, 1.5, 2.5, 4.0])
@pytest.mark.parametrize("x", [0.1, 1.0, 5.0, 40.0])
def test_upper_gamma_matches_scipy(s, x):
    ref = float(sp.gammaincc(s, x) * sp.gamma(s))
    assert upper_gamma(s, x) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("s", [0.5, 1.25, 3.0])
@pytest.mark.parametrize("x", [0.2, 2.0, 15.0])
def test_upper_gamma_recurrence(s, x):
    # Gamma(s+1, x) = s Gamma(s, x) + x^s e^{-x}
    lhs = upper_gamma(s + 1.0, x)
    rhs = s * upper_gamma(s, x) + x**s * math.exp(-x)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_upper_gamma_at_zero_is_gamma():
    for s in (0.5, 2.0, 3.5):
        assert upper_gamma(s, 0.0) == pytest.approx(math.gamma(s), rel=1e-13)
