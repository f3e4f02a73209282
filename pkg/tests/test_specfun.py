import numpy as np
import pytest
from scipy import special

from models.errors import DomainError
from stat_utils.specfun import bessel_ratio, log_bessel_i0, log_gamma, polygamma, std_normal_pdf

GRID = np.array([0.1, 0.5, 1.0, 2.5, 7.0, 13.0, 50.0])


def test_log_gamma_known_values():
    assert log_gamma(1.0) == pytest.approx(0.0, abs=1e-15)
    assert log_gamma(5.0) == pytest.approx(np.log(24.0), rel=1e-12)
    assert log_gamma(0.5) == pytest.approx(0.5723649429247001, rel=1e-12)


def test_log_gamma_duplication_identity():
    x = GRID
    lhs = log_gamma(2 * x)
    rhs = log_gamma(x) + log_gamma(x + 0.5) + (2 * x - 1) * np.log(2.0) - 0.5 * np.log(2 * np.pi)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.nan])
def test_log_gamma_rejects_nonpositive(bad):
    with pytest.raises(DomainError):
        log_gamma(bad)


def test_polygamma_known_values():
    assert polygamma(0, 1.0) == pytest.approx(-0.5772156649015329, rel=1e-12)
    assert polygamma(1, 1.0) == pytest.approx(np.pi ** 2 / 6, rel=1e-12)
    assert polygamma(2, 1.0) == pytest.approx(-2.4041138063191885, rel=1e-12)


def test_polygamma_recurrences():
    x = GRID
    np.testing.assert_allclose(polygamma(0, x + 1) - polygamma(0, x), 1 / x, rtol=1e-10)
    np.testing.assert_allclose(polygamma(1, x + 1) - polygamma(1, x), -1 / x ** 2, rtol=1e-10)
    np.testing.assert_allclose(polygamma(2, x + 1) - polygamma(2, x), 2 / x ** 3, rtol=1e-10)


def test_polygamma_rejects_bad_order_and_argument():
    with pytest.raises(DomainError):
        polygamma(3, 1.0)
    with pytest.raises(DomainError):
        polygamma(0, -2.0)


def test_bessel_ratio_value_at_two():
    assert bessel_ratio(2.0).r == pytest.approx(0.6977746579640081, rel=1e-9)


@pytest.mark.parametrize("phi", [1e-3, 5e-3, 0.0099, 0.3, 2.0, 40.0, 700.0])
def test_bessel_ratio_matches_scaled_bessel_functions(phi):
    expected = special.i1e(phi) / special.i0e(phi)
    assert bessel_ratio(phi).r == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("phi", [1e-3, 0.5, 2.0, 10.0, 100.0, 700.0])
def test_bessel_ratio_derivative_identity(phi):
    b = bessel_ratio(phi)
    assert 0.0 <= b.r < 1.0
    assert b.r1 > 0.0
    assert b.r1 == pytest.approx(1.0 - b.r / phi - b.r ** 2, abs=1e-12)


@pytest.mark.parametrize("phi", [0.5, 2.0, 10.0, 100.0])
def test_bessel_ratio_derivatives_match_finite_differences(phi):
    h = 1e-4 * phi
    lo, hi = bessel_ratio(phi - h), bessel_ratio(phi + h)
    b = bessel_ratio(phi)
    assert b.r1 == pytest.approx((hi.r - lo.r) / (2 * h), rel=1e-6)
    assert b.r2 == pytest.approx((hi.r1 - lo.r1) / (2 * h), rel=1e-6)


def test_bessel_ratio_limits():
    assert bessel_ratio(1e-8).r == pytest.approx(5e-9, rel=1e-9)
    large = bessel_ratio(5000.0)
    assert np.isfinite(large.r) and large.r < 1.0
    assert np.isfinite(log_bessel_i0(5000.0))
    with pytest.raises(DomainError):
        bessel_ratio(0.0)


def test_std_normal_pdf():
    assert std_normal_pdf(0.0) == pytest.approx(0.3989422804014327, rel=1e-14)
    assert std_normal_pdf(1.7) == std_normal_pdf(-1.7)
    assert std_normal_pdf(40.0) == 0.0
