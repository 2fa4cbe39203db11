import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from vmfkde.specfun import (MAX_ORDER, X_SWITCH, bessel_ratio, log_c_vmf, log_c_vmf_split,
                            log_scaled_bessel_i, log_surface_area, mean_resultant_length,
                            surface_area)

half_orders = st.integers(0, 40).map(lambda k: k / 2)


def mp_log_scaled(nu, x):
    return float(mpmath.log(mpmath.besseli(nu, x)) - x)


def test_zero_argument():
    assert log_scaled_bessel_i(0, 0.0) == 0.0
    assert log_scaled_bessel_i(1.5, 0.0) == -np.inf


def test_half_order_closed_form():
    expected = math.log(math.exp(-2) * math.sqrt(2 / (2 * math.pi)) * math.sinh(2))
    assert log_scaled_bessel_i(0.5, 2.0) == pytest.approx(expected, abs=1e-13)


def test_large_argument_expansion_at_d2():
    x = 1e4
    # d = 2 kills the 1/x correction
    assert log_scaled_bessel_i(0.5, x) == pytest.approx(-0.5 * math.log(2 * math.pi * x), abs=1e-12)


@pytest.mark.parametrize("nu", [0, 0.5, 1, 4.5, 20, 99.5])
@pytest.mark.parametrize("x", [1e-3, 0.7, 12.0, 29.9, 30.1, 75.0, 400.0, 9000.0, 2e4])
def test_matches_mpmath(nu, x):
    assert log_scaled_bessel_i(nu, x) == pytest.approx(mp_log_scaled(nu, x), rel=1e-10, abs=1e-11)


@given(half_orders, st.floats(1.0, 1e6))
def test_scaled_value_in_unit_interval(nu, x):
    v = log_scaled_bessel_i(nu, x)
    assert np.isfinite(v) and v <= 0.0


@given(st.floats(0.05, 5e4))
def test_monotone_in_order(x):
    vals = [log_scaled_bessel_i(k / 2, x) for k in range(0, 12)]
    assert np.all(np.diff(vals) <= 1e-12)


@pytest.mark.parametrize("nu", [1, 1.5, 2.5, 7, 30.5])
def test_recurrence(nu):
    x = np.geomspace(0.05, 5e4, 60)
    lhs = np.exp(log_scaled_bessel_i(nu - 1, x) - log_scaled_bessel_i(nu, x)) \
        - np.exp(log_scaled_bessel_i(nu + 1, x) - log_scaled_bessel_i(nu, x))
    np.testing.assert_allclose(lhs, 2 * nu / x, rtol=1e-8)


@pytest.mark.parametrize("nu", [0, 0.5, 1.5, 4.5])
def test_continuity_at_switch(nu):
    left = log_scaled_bessel_i(nu, np.nextafter(X_SWITCH, 0))
    right = log_scaled_bessel_i(nu, np.nextafter(X_SWITCH, np.inf))
    assert abs(left - right) < 1e-8


def test_domain_errors():
    with pytest.raises(ValueError):
        log_scaled_bessel_i(-0.5, 1.0)
    with pytest.raises(ValueError):
        log_scaled_bessel_i(0.5, -1.0)
    with pytest.raises(ValueError):
        log_scaled_bessel_i(MAX_ORDER + 1, 1.0)
    with pytest.raises(ValueError):
        log_c_vmf(2, -1.0)


def test_vectorized_equals_scalar():
    x = np.array([0.0, 0.3, 31.0, 2e4])
    np.testing.assert_array_equal(log_scaled_bessel_i(1.5, x),
                                  [log_scaled_bessel_i(1.5, v) for v in x])


def test_log_c_values():
    assert log_c_vmf(2, 0.0) == pytest.approx(-math.log(4 * math.pi), abs=1e-14)
    assert log_c_vmf(2, 1.0) == pytest.approx(math.log(1 / (4 * math.pi * math.sinh(1))), rel=1e-13)
    assert math.exp(log_c_vmf(2, 1.0)) == pytest.approx(0.0677139, abs=1e-7)
    i0 = float(mpmath.besseli(0, 1))
    assert i0 == pytest.approx(1.2660658, abs=1e-7)
    assert log_c_vmf(1, 1.0) == pytest.approx(-math.log(2 * math.pi * i0), rel=1e-13)


@pytest.mark.parametrize("d", [1, 2, 3, 7])
def test_log_c_small_kappa_limit(d):
    assert abs(log_c_vmf(d, 1e-8) + log_surface_area(d)) < 1e-8


@pytest.mark.parametrize("d,kappa", [(2, 5.0), (1, 0.0), (10, 1e3), (3, 2e4)])
def test_split_reconstructs(d, kappa):
    a, b = log_c_vmf_split(d, kappa)
    assert b == -1.0
    assert a + b * kappa == pytest.approx(log_c_vmf(d, kappa), abs=1e-10)
    if kappa == 0:
        assert a == pytest.approx(-math.log(2 * math.pi))


def test_surface_areas():
    assert surface_area(1) == pytest.approx(2 * math.pi)
    assert surface_area(2) == pytest.approx(4 * math.pi)
    assert surface_area(3) == pytest.approx(2 * math.pi ** 2)


@given(st.integers(1, 6), st.floats(0.01, 200.0))
def test_mean_resultant_length_is_coth_form_on_s2(d, kappa):
    a = mean_resultant_length(d, kappa)
    assert 0.0 < a < 1.0
    if d == 2:
        assert a == pytest.approx(1 / math.tanh(kappa) - 1 / kappa, rel=1e-9, abs=1e-12)


def test_bessel_ratio_zero():
    assert bessel_ratio(0.5, 0.0) == 0.0
