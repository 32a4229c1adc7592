import numpy as np
import pytest

from specshrink.errors import InvalidPrior, SampleTooShort, TooFewDraws
from specshrink.gaussian_core import RngSeed, exact_log_likelihood, sample_ar_path
from specshrink.inference import (
    McmcOptions,
    MleOptions,
    PosteriorDraws,
    canonical_order,
    cls_roots,
    effective_sample_size,
    estimative_psd,
    mle,
    posterior_sample,
    predictive_psd,
    predictive_values,
)
from specshrink.kahler_geometry import PriorSpec
from specshrink.spectral_model import frequency_grid, psd_from_roots

SMALL = McmcOptions(burn_in=500, kept=1000, thin=2)


def draws_of(arr):
    arr = np.asarray(arr, dtype=complex).reshape(len(arr), -1)
    return PosteriorDraws(arr, np.zeros(len(arr)), 0.3, 0, 1, float(len(arr)), False)


# --- point estimates ----------------------------------------------------------------


def test_canonical_order_sorts_by_real_then_imaginary():
    out = canonical_order(np.array([0.5j, 0.1, -0.5j, -0.2]))
    assert np.array_equal(out, [-0.2, -0.5j, 0.5j, 0.1])


def test_cls_recovers_root():
    z = sample_ar_path([0.6 + 0.3j], 4000, 1).values
    assert abs(cls_roots(z, 1)[0] - (0.6 + 0.3j)) < 0.05


@pytest.mark.parametrize("xi", [0.6 + 0.3j, -0.2, 0.0])
def test_mle_is_consistent(xi):
    n = 2000
    res = mle(sample_ar_path([xi], n, 7), 1)
    assert res.converged
    assert abs(res.roots[0] - xi) < 5 * np.sqrt((1 - abs(xi) ** 2) / n)


def test_mle_p2_recovers_roots():
    r = np.array([0.7, -0.5j])
    res = mle(sample_ar_path(r, 3000, 2), 2)
    got = canonical_order(res.roots)
    want = canonical_order(r)
    assert np.max(np.abs(got - want)) < 0.08


def test_mle_beats_truth_and_starts():
    z = sample_ar_path([0.5, -0.3 + 0.2j], 100, 3).values
    res = mle(z, 2)
    assert res.loglik >= exact_log_likelihood([0.5, -0.3 + 0.2j], z) - 1e-9
    assert res.loglik >= np.max(res.start_logliks) - 1e-9
    assert np.isclose(res.loglik, exact_log_likelihood(res.roots, z), atol=1e-8)


def test_mle_whittle_objective():
    z = sample_ar_path([0.5], 1000, 4).values
    a = mle(z, 1, MleOptions(objective="whittle")).roots[0]
    b = mle(z, 1).roots[0]
    assert abs(a - b) < 0.03


def test_mle_needs_enough_data():
    with pytest.raises(SampleTooShort):
        mle(np.ones(5, complex), 1)


def test_mle_is_reproducible():
    z = sample_ar_path([0.3, 0.1j], 60, 5).values
    a, b = mle(z, 2, seed=RngSeed(9)), mle(z, 2, seed=RngSeed(9))
    assert np.array_equal(a.roots, b.roots)


def test_estimative_psd_is_plugin():
    z = sample_ar_path([0.4], 200, 6).values
    res = mle(z, 1)
    w = frequency_grid(64)
    assert np.allclose(estimative_psd(res)(w), psd_from_roots(res.roots)(w))


# --- posterior sampling --------------------------------------------------------------------


def test_posterior_rejects_kappa_two():
    with pytest.raises(InvalidPrior):
        posterior_sample(np.ones(10, complex), PriorSpec.from_kappa(2.0), 1)


@pytest.mark.parametrize("p", [1, 2])
def test_posterior_draws_are_valid_and_reproducible(p):
    r = [0.5] if p == 1 else [0.5, -0.4j]
    z = sample_ar_path(r, 80, 8).values
    a = posterior_sample(z, PriorSpec.from_kappa(-1.0), p, SMALL, seed=RngSeed(1))
    b = posterior_sample(z, PriorSpec.from_kappa(-1.0), p, SMALL, seed=RngSeed(1))
    assert np.array_equal(a.draws, b.draws)
    assert a.draws.shape == (SMALL.kept, p)
    assert np.all(np.abs(a.draws) < 1)
    assert 0.05 < a.acceptance_rate < 0.8
    assert a.thinning == 2 and a.burn_in == 500


def test_posterior_concentrates_near_truth():
    xi = 0.5 + 0.2j
    z = sample_ar_path([xi], 2000, 10).values
    d = posterior_sample(z, PriorSpec.jeffreys(), 1, SMALL, seed=RngSeed(2))
    assert abs(d.draws.mean() - xi) < 5 * np.sqrt((1 - abs(xi) ** 2) / 2000)


def test_ess_of_iid_and_correlated_series():
    rng = np.random.default_rng(0)
    iid = rng.standard_normal((1, 4000))
    assert effective_sample_size(iid)[0] > 3000
    x = np.zeros(4000)
    for t in range(1, 4000):
        x[t] = 0.9 * x[t - 1] + rng.standard_normal()
    assert effective_sample_size(x[None])[0] < 600


# --- predictive densities -------------------------------------------------------------------


def test_predictive_needs_enough_draws():
    with pytest.raises(TooFewDraws):
        predictive_psd(draws_of(np.full(10, 0.5)))


def test_predictive_of_point_mass_is_that_spectrum():
    w = frequency_grid(512)
    got = predictive_psd(draws_of(np.full(200, 0.3 + 0.4j)), 512).values
    assert np.allclose(got, psd_from_roots([0.3 + 0.4j])(w), rtol=1e-12)


def test_fft_mixture_matches_direct_evaluation():
    rng = np.random.default_rng(3)
    d = 0.9 * np.sqrt(rng.random(300)) * np.exp(2j * np.pi * rng.random(300))
    w = frequency_grid(1024)
    fast = predictive_values(d, w)
    direct = np.mean([psd_from_roots([x])(w) for x in d], axis=0)
    assert np.allclose(fast, direct, rtol=1e-10)
    # off-grid frequencies take the direct kernel
    w2 = np.linspace(-3, 3, 7)
    assert np.allclose(predictive_values(d, w2), np.mean([psd_from_roots([x])(w2) for x in d], axis=0), rtol=1e-10)


def test_p2_mixture_matches_direct_evaluation():
    rng = np.random.default_rng(4)
    d = 0.8 * np.sqrt(rng.random((150, 2))) * np.exp(2j * np.pi * rng.random((150, 2)))
    w = frequency_grid(256)
    direct = np.mean([psd_from_roots(x)(w) for x in d], axis=0)
    assert np.allclose(predictive_values(d, w), direct, rtol=1e-10)


def test_predictive_total_power_is_mean_variance():
    d = np.array([0.1, 0.5, 0.5j, -0.7] * 50)
    s = predictive_psd(draws_of(d), 2048).values
    assert np.isclose(2 * np.pi * s.mean(), np.mean(1 / (1 - np.abs(d) ** 2)), rtol=1e-10)
