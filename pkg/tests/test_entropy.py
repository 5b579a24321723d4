import mpmath
import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings
from hypothesis import strategies as st

from soft_bermudan.entropy import (
    ENVELOPE_CONST, OVERFLOW_CUTOFF, TAYLOR_CUTOFF, EntropyKernel, driver_gap_bound, error_scale,
    gibbs_density_at, phi, phi_prime, psi, regularised_driver)
from soft_bermudan.errors import DomainError

mpmath.mp.dps = 50


def mp_phi(x):
    x = mpmath.mpf(x)
    if x == 0:
        return mpmath.mpf(0)
    return mpmath.log(mpmath.expm1(x) / x)


def mp_phi_prime(x):
    return mpmath.diff(mp_phi, mpmath.mpf(x)) if x != 0 else mpmath.mpf("0.5")


def test_phi_special_values():
    assert phi(0.0) == 0.0
    assert psi(0.0) == 0.5
    assert phi_prime(0.0) == 0.5
    assert phi(1.0) == pytest.approx(float(mpmath.log(mpmath.e - 1)), abs=1e-15)
    assert psi(1.0) == pytest.approx(0.54132, abs=1e-5)


@pytest.mark.parametrize("x", [-700.0, -45.0, -30.5, -29.5, -3.0, -1e-5, 1e-6, 2e-4, 0.7, 12.0, 29.9, 30.1, 80.0, 700.0])
def test_phi_matches_extended_precision(x):
    ref = float(mp_phi(x))
    assert phi(x) == pytest.approx(ref, rel=1e-13, abs=1e-15)
    # psi divides by x, so cancellation in the direct branch costs ~1e-16/|x|
    assert psi(x) == pytest.approx(ref / x, rel=1e-13, abs=1e-12)


@pytest.mark.parametrize("x", [-40.0, -5.0, -1e-5, 3e-5, 0.3, 5.0, 40.0])
def test_phi_prime_matches_extended_precision(x):
    assert phi_prime(x) == pytest.approx(float(mp_phi_prime(x)), rel=1e-11, abs=1e-14)


def test_phi_non_positive_on_negative_axis():
    x = np.random.default_rng(1).uniform(0, 100, 1000)
    assert np.all(phi(-x) <= 0)


def test_phi_prime_matches_finite_difference():
    x = np.random.default_rng(2).uniform(-20, 20, 200)
    h = 1e-5
    fd = (phi(x + h) - phi(x - h)) / (2 * h)
    np.testing.assert_allclose(phi_prime(x), fd, atol=1e-6)


def test_lipschitz_random_pairs():
    rng = np.random.default_rng(3)
    a = rng.uniform(-60, 60, 10_000)
    b = a + rng.normal(0, 5, 10_000)
    assert np.all(np.abs(phi(a) - phi(b)) <= np.abs(a - b) + 1e-12)


def test_psi_is_a_cdf():
    x = np.sort(np.random.default_rng(4).uniform(-200, 200, 20_000))
    v = psi(x)
    assert np.all(np.diff(v) >= 0)
    assert np.all((v > 0) & (v < 1))
    assert psi(-50.0) < 0.1 and psi(50.0) > 0.9


def test_phi_prime_in_unit_interval():
    x = np.random.default_rng(5).uniform(-500, 500, 5000)
    v = phi_prime(x)
    assert np.all((v >= 0) & (v <= 1))


@pytest.mark.parametrize("cut", [TAYLOR_CUTOFF, -TAYLOR_CUTOFF, OVERFLOW_CUTOFF, -OVERFLOW_CUTOFF])
def test_continuity_at_switch_points(cut):
    inside = cut * (1 - 1e-14)
    outside = cut * (1 + 1e-14)
    assert abs(phi(inside) - phi(outside)) < 1e-10
    assert abs(psi(inside) - psi(outside)) < 1e-10
    assert abs(phi_prime(inside) - phi_prime(outside)) < 1e-10


def test_non_finite_inputs_rejected():
    for fn in (phi, psi, phi_prime):
        with pytest.raises(DomainError):
            fn(np.nan)
        with pytest.raises(DomainError):
            fn(np.array([1.0, np.inf]))


def test_regularised_driver_examples():
    assert regularised_driver(0.5, 0.5) == pytest.approx(0.5 * float(mp_phi(1)), abs=1e-14)
    assert regularised_driver(0.5, 0.5) == pytest.approx(0.27066, abs=1e-5)
    with pytest.raises(DomainError):
        regularised_driver(1.0, 0.0)
    with pytest.raises(DomainError):
        regularised_driver(1.0, -0.1)


def test_driver_below_positive_part():
    rng = np.random.default_rng(6)
    g = rng.uniform(-50, 50, 5000)
    for lam in (1e-4, 1e-2, 0.3, 2.0):
        assert np.all(regularised_driver(g, lam) <= np.maximum(g, 0) + 1e-12)


def test_driver_non_increasing_in_lambda():
    lams = np.geomspace(10, 1e-6, 200)
    for a in (-5.0, -0.1, 0.0, 0.2, 3.0, 40.0):
        vals = np.array([regularised_driver(a, lam) for lam in lams])
        # decreasing lambda along the grid: values must not decrease
        assert np.all(np.diff(vals) >= -1e-12)


def test_driver_gap_envelope_on_grid():
    xs = np.linspace(-50, 50, 2001)
    for c in np.geomspace(1e-3, 1, 13):
        for eps in (0.1, 0.5, 0.9):
            gap = np.maximum(xs, 0) - regularised_driver(xs, c)
            bound = driver_gap_bound(xs, c, eps)
            assert np.all(gap >= -1e-12)
            assert np.all(bound - gap >= -1e-12)


def test_error_scale():
    assert error_scale(0.1) == pytest.approx(0.1 - 0.1 * np.log(0.1))
    assert ENVELOPE_CONST == pytest.approx(1 - np.log(1 - np.exp(-1)))
    with pytest.raises(DomainError):
        error_scale(0.0)


def test_gibbs_density_uniform_limit_and_positivity():
    u = np.linspace(0, 1, 101)
    np.testing.assert_array_equal(gibbs_density_at(0.0, u), 1.0)
    for rate in (-30.0, -3.0, 0.5, 30.0):
        assert np.all(gibbs_density_at(rate, u) > 0)
    for rate in (-800.0, 800.0):
        # no overflow at extreme rates, the far end underflows to 0
        assert np.all(np.isfinite(gibbs_density_at(rate, u)))
    with pytest.raises(DomainError):
        gibbs_density_at(1.0, 1.5)


@pytest.mark.parametrize("rate", [-10.0, -5.0, -1.0, 0.0, 0.5, 2.0, 3.0])
def test_gibbs_normalisation_and_mean(rate):
    mass, _ = scipy.integrate.quad(lambda u: gibbs_density_at(rate, u), 0, 1, epsabs=1e-13, epsrel=1e-13, limit=200)
    mean, _ = scipy.integrate.quad(lambda u: u * gibbs_density_at(rate, u), 0, 1, epsabs=1e-13, epsrel=1e-13, limit=200)
    assert mass == pytest.approx(1.0, abs=1e-10)
    assert mean == pytest.approx(phi_prime(rate), abs=1e-8)


def test_kernel_classical_mode():
    k = EntropyKernel(0.0)
    assert k.classical
    np.testing.assert_array_equal(k.driver(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])
    assert k.hazard(0.0) == 0.5
    with pytest.raises(DomainError):
        EntropyKernel(-1.0)
    with pytest.raises(DomainError):
        EntropyKernel(0.1, taylor_cutoff=2.0)


def test_kernel_matches_free_functions():
    k = EntropyKernel(0.05)
    g = np.linspace(-3, 3, 31)
    np.testing.assert_allclose(k.driver(g), regularised_driver(g, 0.05), rtol=0, atol=1e-15)
    np.testing.assert_allclose(k.hazard(g), psi(g / 0.05), rtol=0, atol=1e-15)
    np.testing.assert_allclose(k.gibbs_mean(g), phi_prime(g / 0.05), rtol=0, atol=1e-15)


@settings(max_examples=300, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_lipschitz_property(a, b):
    assert abs(phi(a) - phi(b)) <= abs(a - b) + 1e-12


@settings(max_examples=300, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(1e-4, 10.0), st.floats(1e-4, 10.0))
def test_driver_lambda_monotone_property(a, l1, l2):
    lo, hi = sorted((l1, l2))
    assert regularised_driver(a, lo) >= regularised_driver(a, hi) - 1e-12
