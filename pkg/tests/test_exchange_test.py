import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats

from ptsghmc.exceptions import CorrectionValidityError, SigmaTooLargeError
from ptsghmc.exchange_test import (
    DEFAULT_GAMMA_SWEEP,
    AcceptanceTest,
    barker_accept,
    barker_probability,
    build_correction_table,
    cached_correction_table,
    correction_density,
    estimate_deltaE_variance,
    hermite,
    logistic_density_derivative,
    logistic_ks,
    minibatch_accept,
    sample_correction,
    series_coefficients,
)
from ptsghmc.model import PotentialOracle, make_regression


def logistic_pdf(x):
    return math.exp(-x) / (1 + math.exp(-x)) ** 2


def test_barker_probability_values():
    assert barker_probability(0.0) == 0.5
    assert barker_probability(1e3) == 1.0
    assert barker_probability(1.0) == pytest.approx(1 / (1 + math.exp(-1)), rel=1e-15)
    assert barker_probability(1.0) == pytest.approx(0.7311, abs=1e-4)


def test_barker_empirical_rate_at_zero():
    acc = barker_accept(np.zeros(10**6), np.random.default_rng(0))
    assert abs(acc.mean() - 0.5) < 0.002


def test_hermite_values():
    assert hermite(0, 3.7) == 1.0
    assert hermite(2, 3.0) == 34.0
    assert hermite(1, 0.4) == pytest.approx(0.8)
    assert hermite(3, 1.5) == pytest.approx(8 * 1.5**3 - 12 * 1.5)


def test_hermite_generating_function():
    x, u = 0.5, 0.3
    series = sum(hermite(k, x) * u**k / math.factorial(k) for k in range(21))
    assert abs(series - math.exp(2 * x * u - u * u)) < 1e-10


def test_hermite_matches_scipy():
    for k in range(12):
        for x in (-2.0, 0.1, 3.3):
            assert hermite(k, x) == pytest.approx(special.eval_hermite(k, x), rel=1e-12)


def test_logistic_derivative_values():
    assert logistic_density_derivative(0, 0.0) == 0.25
    assert abs(logistic_density_derivative(1, 0.0)) < 1e-16
    h = 1e-4
    fd = (logistic_pdf(h) - 2 * logistic_pdf(0) + logistic_pdf(-h)) / h**2
    assert logistic_density_derivative(2, 0.0) == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("m", [1, 2, 3, 5, 8])
def test_logistic_derivative_finite_differences(m):
    xs = np.array([-7.0, -1.3, 0.4, 2.5, 9.0])
    h = 1e-5
    fd = (logistic_density_derivative(m - 1, xs + h) - logistic_density_derivative(m - 1, xs - h)) / (2 * h)
    np.testing.assert_allclose(logistic_density_derivative(m, xs), fd, rtol=1e-5, atol=1e-9)


def test_logistic_derivative_parity_and_tails():
    xs = np.linspace(0.1, 40, 50)
    for m in range(0, 17):
        sign = -1 if m % 2 else 1
        np.testing.assert_allclose(logistic_density_derivative(m, -xs),
                                   sign * logistic_density_derivative(m, xs), rtol=1e-12, atol=0)
    assert np.all(np.isfinite(logistic_density_derivative(16, np.array([-800.0, 800.0]))))


def test_series_coefficients_leading_term():
    c = series_coefficients(0.25, 0.01, 8)
    assert len(c) == 9
    assert c[0] == 1.0


def test_correction_density_small_noise_limit():
    assert correction_density(0.0, 1e-6, 1e-4, 8) == pytest.approx(0.25, abs=1e-3)


@settings(max_examples=30, deadline=None)
@given(
    st.floats(0.0, 10.0),
    st.floats(1e-3, 1.0),
    st.floats(1e-4, 0.5),
    st.integers(0, 8),
)
def test_correction_density_is_even(x, sigma2, gamma, K):
    a = correction_density(x, sigma2, gamma, K)
    b = correction_density(-x, sigma2, gamma, K)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-300)


def test_correction_density_rejects_bad_arguments():
    with pytest.raises(ValueError):
        correction_density(0.0, -1.0, 0.1)
    with pytest.raises(ValueError):
        correction_density(0.0, 0.25, 0.0)


@pytest.mark.parametrize("sigma", [0.1, 0.25, 0.5, 1.0])
def test_table_is_valid_and_well_formed(sigma):
    t = build_correction_table(sigma**2)
    assert t.valid
    assert t.clipped_mass < 1e-3
    assert np.all(t.density >= 0)
    assert np.all(np.diff(t.cdf) >= 0)
    assert t.cdf[0] == 0.0 and abs(t.cdf[-1] - 1.0) < 1e-9
    assert t.convolution_ks < 2e-3


def test_table_at_injected_noise_scale_passes_sampled_convolution_check():
    t = build_correction_table(0.25)
    rng = np.random.default_rng(0)
    draws = sample_correction(t, rng, 10**5) + 0.5 * rng.standard_normal(10**5)
    assert logistic_ks(draws) < 0.01


def test_too_much_noise_raises():
    with pytest.raises(SigmaTooLargeError):
        build_correction_table(25.0)


def test_zero_noise_needs_no_table():
    with pytest.raises(ValueError, match="no correction"):
        build_correction_table(0.0)


def test_explicit_gamma_can_give_invalid_table():
    t = build_correction_table(4.0, gamma=1e-4)
    assert not t.valid
    with pytest.raises(CorrectionValidityError):
        sample_correction(t, np.random.default_rng(0))


def test_auto_gamma_picks_smallest_valid():
    t = build_correction_table(1.21)
    assert t.gamma > 1e-4
    for g in DEFAULT_GAMMA_SWEEP:
        if g < t.gamma:
            assert not build_correction_table(1.21, gamma=g).valid


def test_cached_table_is_reused():
    assert cached_correction_table(0.25) is cached_correction_table(0.25)


def test_correction_samples_mean_and_cdf():
    t = build_correction_table(0.25)
    draws = t.sample(np.random.default_rng(1), 10**6)
    se = draws.std() / math.sqrt(len(draws))
    assert abs(draws.mean()) < 3 * se
    ks = stats.kstest(draws, t.cdf_at).statistic
    assert ks < 0.005


def test_minibatch_accept_overwhelming_evidence():
    t = build_correction_table(0.25)
    rng = np.random.default_rng(0)
    assert all(minibatch_accept(1e3, 0.25, t, rng) for _ in range(100))
    assert not any(minibatch_accept(-1e3, 0.25, t, rng) for _ in range(100))


def test_minibatch_accept_rate_at_zero():
    t = build_correction_table(0.25)
    rng = np.random.default_rng(2)
    noisy = 0.5 * rng.standard_normal(10**5)
    acc = minibatch_accept(noisy, 0.25, t, rng)
    assert abs(acc.mean() - 0.5) < 0.01


@pytest.mark.parametrize("s", [-2.0, -0.5, 0.7, 3.0])
def test_minibatch_accept_reproduces_barker(s):
    # smaller statistic variance is padded up to the table's level
    t = build_correction_table(0.25)
    rng = np.random.default_rng(3)
    n = 2 * 10**5
    noisy = s + math.sqrt(0.1) * rng.standard_normal(n)
    rate = minibatch_accept(noisy, 0.1, t, rng).mean()
    assert abs(rate - special.expit(s)) < 4 * math.sqrt(0.25 / n)


def test_minibatch_accept_rejects_variance_above_table():
    t = build_correction_table(0.25)
    with pytest.raises(SigmaTooLargeError):
        minibatch_accept(0.0, 0.3, t, np.random.default_rng(0))


def test_variance_closed_form_injected_noise():
    assert estimate_deltaE_variance(0.5, noise_variance=0.25) == pytest.approx(0.125)


def test_variance_full_batch_is_zero():
    diff = np.random.default_rng(0).normal(size=(2, 50))
    assert estimate_deltaE_variance(0.5, diff[0], diff[1], n_data=50) == 0.0


def test_minibatch_variance_estimator_matches_monte_carlo():
    model = make_regression(n_data=400, dim=2, noise_std=1.0, random_state=1)
    oracle = PotentialOracle(model, "minibatch", batch_size=40)
    th_j, th_k = np.array([0.2, -0.4]), np.array([0.9, 0.3])
    scale = 1.0 - 1.0 / 2.0
    rng = np.random.default_rng(5)
    stats_, estimates = [], []
    for _ in range(10**4):
        batch = oracle.draw_batch(rng)
        Uj, tj = oracle.minibatch_potential(th_j, batch=batch)
        Uk, tk = oracle.minibatch_potential(th_k, batch=batch)
        stats_.append((Uk - Uj) * scale)
        estimates.append(estimate_deltaE_variance(scale, tj, tk, n_data=400))
    assert np.mean(estimates) == pytest.approx(np.var(stats_), rel=0.10)


def test_acceptance_test_dispatch():
    rng = np.random.default_rng(0)
    assert AcceptanceTest("always").decide(-50.0, 0.0, rng) == (True, None, False)
    assert AcceptanceTest("never").decide(50.0, 0.0, rng) == (False, None, False)
    test = AcceptanceTest("minibatch-corrected")
    acc, c, skipped = test.decide(0.3, 0.2, rng)
    assert c is not None and not skipped
    # beyond every table: skipped and not accepted
    acc, c, skipped = test.decide(50.0, 1.5, rng)
    assert skipped and not acc and c is None
    # zero variance falls back to the exact test
    acc, c, skipped = test.decide(0.3, 0.0, rng)
    assert c is None and not skipped


def test_table_for_uses_smallest_sufficient_level():
    test = AcceptanceTest("minibatch-corrected")
    assert test.table_for(0.01).sigma2 == pytest.approx(0.01)
    assert test.table_for(0.02).sigma2 == pytest.approx(0.0625)
    assert test.table_for(0.9).sigma2 == pytest.approx(1.0)
    assert test.table_for(1.01) is None


def test_acceptance_test_validation():
    with pytest.raises(ValueError):
        AcceptanceTest("metropolis")
    with pytest.raises(ValueError):
        AcceptanceTest(noise_model="guess")
