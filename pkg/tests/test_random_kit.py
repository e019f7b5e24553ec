import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from oracles import (
    half_stable_cdf,
    logbeta_new_weight_density,
    logbeta_new_weight_normalizer,
    mean_se,
    stable_new_weight_cdf,
)
from pkhybrid import _kernels as kn
from pkhybrid.exceptions import CapabilityError, DomainError
from pkhybrid.model import LogBetaPrior, StablePrior, _polynomially_tilted_stable
from pkhybrid.random_kit import (
    logbeta_new_weight_target,
    logbeta_uses_power_proposal,
    sample_gamma,
    sample_inverse_gamma,
    sample_new_weight_exact,
    sample_new_weight_generic,
    sample_new_weight_logbeta,
    sample_positive_stable,
    sample_tilted_stable,
    spawn_streams,
)
from pkhybrid.stable_math import LogBetaParams, PitmanYor, SigmaStableParams


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# ---------------------------------------------------------------- stable laws


def test_positive_stable_laplace_transform(rng):
    t = sample_positive_stable(0.5, rng, size=10**6)
    m, se = mean_se(np.exp(-t))
    assert abs(m - math.exp(-1)) < 3 * se


def test_positive_stable_half_ks(rng):
    t = sample_positive_stable(0.5, rng, size=10**5)
    assert stats.kstest(t, half_stable_cdf).statistic < 0.005


def test_samplers_deterministic():
    a = sample_positive_stable(0.3, np.random.default_rng(5), size=10)
    b = sample_positive_stable(0.3, np.random.default_rng(5), size=10)
    assert np.array_equal(a, b)
    assert isinstance(sample_positive_stable(0.3, np.random.default_rng(5)), float)


def test_spawned_streams_independent_and_reproducible():
    a = [g.random() for g in spawn_streams(3, 4)]
    b = [g.random() for g in spawn_streams(3, 4)]
    assert a == b and len(set(a)) == 4


def test_tilted_zero_is_plain_stable(rng):
    a = sample_tilted_stable(0.5, 0.0, rng, size=10**5)
    b = sample_positive_stable(0.5, rng, size=10**5)
    assert stats.ks_2samp(a, b).statistic < 0.01


@pytest.mark.parametrize("lam,expected", [(4.0, 0.25), (1.0, 0.5)])
def test_tilted_mean(rng, lam, expected):
    t = sample_tilted_stable(0.5, lam, rng, size=10**6)
    m, se = mean_se(t)
    assert expected == pytest.approx(0.5 * lam ** -0.5)
    assert abs(m - expected) < 3 * se


@pytest.mark.parametrize("sigma", [0.3, 0.7])
def test_naive_and_double_rejection_agree_at_switch(rng, sigma):
    lam = 2.0 ** (1 / sigma)
    a = sample_tilted_stable(sigma, lam, rng, size=10**5, method="naive")
    b = sample_tilted_stable(sigma, lam, rng, size=10**5, method="double")
    assert stats.ks_2samp(a, b).statistic < 0.01


def test_double_rejection_large_tilt_mean(rng):
    sigma, lam = 0.3, 500.0
    t = sample_tilted_stable(sigma, lam, rng, size=2 * 10**5)
    m, se = mean_se(t)
    assert abs(m - sigma * lam ** (sigma - 1)) < 3 * se


def test_tilt_must_be_non_negative(rng):
    with pytest.raises(DomainError):
        sample_tilted_stable(0.5, -1.0, rng)


@pytest.mark.parametrize("theta", [-0.3, 0.0, 1.0, 10.0])
def test_polynomially_tilted_moments(rng, theta):
    # density t^-theta f(t) / E[S^-theta]; E_theta[T^q] = E[S^(q-theta)] / E[S^-theta]
    sigma = 0.5
    t = _polynomially_tilted_stable(sigma, theta, rng, 4 * 10**5)

    def m(p):
        return math.gamma(1 - p / sigma) / math.gamma(1 - p)

    q = -0.5
    expect = m(q - theta) / m(-theta)
    mean, se = mean_se(t**q)
    assert abs(mean - expect) < 3.5 * se


# ---------------------------------------------------------------- gamma family


def test_gamma_means(rng):
    m, se = mean_se(sample_gamma(0.75, 1.0, rng, size=10**6))
    assert abs(m - 0.75) < 3 * se
    m, se = mean_se(sample_gamma(2.0, 4.0, rng, size=10**6))
    assert abs(m - 0.5) < 3 * se


def test_inverse_gamma_mean(rng):
    m, se = mean_se(sample_inverse_gamma(3.0, 2.0, rng, size=10**6))
    assert abs(m - 1.0) < 3 * se


def test_gamma_domain(rng):
    with pytest.raises(DomainError):
        sample_gamma(0.0, 1.0, rng)
    with pytest.raises(DomainError):
        sample_inverse_gamma(1.0, -1.0, rng)


# ---------------------------------------------------------------- new weights


@pytest.mark.parametrize("v", [1.0, 2.0])
def test_exact_new_weight_matches_oracle(rng, v):
    s = sample_new_weight_exact(v, 0.5, rng, size=10**5)
    assert stats.kstest(s, stable_new_weight_cdf(v, 0.5)).statistic < 0.01


def test_exact_new_weight_is_not_scale_equivariant(rng):
    a = sample_new_weight_exact(1.0, 0.5, rng, size=10**5)
    b = sample_new_weight_exact(2.0, 0.5, rng, size=10**5)
    assert stats.ks_2samp(2 * a, b).statistic > 0.1


@given(st.floats(1e-8, 1e8))
@settings(max_examples=50, deadline=None)
def test_exact_new_weight_inside_support(v):
    s = sample_new_weight_exact(v, 0.5, np.random.default_rng(1), size=1000)
    assert np.all((s > 0) & (s < v))


def test_exact_new_weight_only_for_half(rng):
    with pytest.raises(CapabilityError):
        sample_new_weight_exact(1.0, 0.3, rng)


def test_generic_agrees_with_exact(rng):
    prior = StablePrior(SigmaStableParams(0.5))
    a = sample_new_weight_generic(1.0, prior, rng, size=10**5)
    b = sample_new_weight_exact(1.0, 0.5, rng, size=10**5)
    assert stats.ks_2samp(a, b).statistic < 0.015


@pytest.mark.parametrize("sigma", [0.3, 0.7])
@pytest.mark.parametrize("v", [1e-2, 1.0, 300.0])
def test_generic_matches_oracle(rng, sigma, v):
    prior = StablePrior(SigmaStableParams(sigma))
    s = sample_new_weight_generic(v, prior, rng, size=5 * 10**4)
    assert np.all((s > 0) & (s < v))
    assert stats.kstest(s, stable_new_weight_cdf(v, sigma)).pvalue > 1e-3


def test_generic_logbeta_b1_is_uniform(rng):
    prior = LogBetaPrior(LogBetaParams(1.0, 1.0))
    s = sample_new_weight_generic(2.0, prior, rng, size=10**5)
    assert stats.kstest(s / 2.0, "uniform").statistic < 0.01


@pytest.mark.parametrize("sigma", [0.3, 0.7])
def test_compiled_grid_sampler_matches_oracle(rng, sigma):
    prior = StablePrior(SigmaStableParams(sigma))
    table = prior.kernel_spec()["table"]
    v = 2.0
    s = np.array([kn.new_weight_grid(rng, v, sigma, 512, *table) for _ in range(30000)])
    assert np.all((s > 0) & (s < v))
    assert stats.kstest(s, stable_new_weight_cdf(v, sigma)).pvalue > 1e-3


def test_compiled_half_sampler_matches_oracle(rng):
    s = np.array([kn.new_weight_half(rng, 1.0) for _ in range(50000)])
    assert stats.kstest(s, stable_new_weight_cdf(1.0, 0.5)).statistic < 0.01


def test_logbeta_b1_always_accepts(rng):
    p = LogBetaParams(1.0, 1.0)
    out = [sample_new_weight_logbeta(3.0, p, rng, return_trials=True) for _ in range(2000)]
    assert all(trials == 1 for _, trials in out)
    s = np.array([d for d, _ in out])
    assert stats.kstest(s / 3.0, "uniform").pvalue > 1e-3


def logbeta_bin_probabilities(v, b, bins):
    from scipy import integrate

    edges = np.linspace(0, v, bins + 1)
    norm = logbeta_new_weight_normalizer(v, b)
    probs = np.array([
        integrate.quad(lambda t: float(logbeta_new_weight_density(t, v, b)), lo, hi, epsabs=0)[0]
        for lo, hi in zip(edges[:-1], edges[1:])
    ]) / norm
    return edges, probs


def test_logbeta_histogram_matches_target(rng):
    p, v = LogBetaParams(1.0, 2.0), 1.0
    n = 10**5
    s = np.array([sample_new_weight_logbeta(v, p, rng) for _ in range(n)])
    edges, probs = logbeta_bin_probabilities(v, 2.0, 50)
    counts, _ = np.histogram(s, edges)
    assert probs.sum() == pytest.approx(1.0, abs=1e-10)
    assert np.max(np.abs(counts / n - probs)) < 0.02
    assert stats.chisquare(counts, n * probs).pvalue > 1e-3


def test_logbeta_target_bounded_by_b():
    s = np.linspace(1e-9, 3.0 - 1e-9, 10001)
    assert np.all(logbeta_new_weight_target(s, 3.0, 2.0) <= 2.0)


@pytest.mark.parametrize("b", [2.0, 5.0])
@pytest.mark.parametrize("v", [1e-7, 1e-2, 0.7, 4.0, 30.0])
def test_logbeta_both_proposals_exact(rng, b, v):
    # b = 2 has a closed-form CDF; other b use quadrature
    p = LogBetaParams(1.0, b)
    s = np.array([sample_new_weight_logbeta(v, p, rng) for _ in range(20000)])
    c = np.array([kn.new_weight_logbeta(rng, v, b, 10**6) for _ in range(20000)])
    norm = logbeta_new_weight_normalizer(v, b)
    grid = np.linspace(0, v, 4001)
    from scipy import integrate

    cum = integrate.cumulative_simpson(logbeta_new_weight_density(np.maximum(grid, 1e-300), v, b),
                                       x=grid, initial=0.0) / norm

    def cdf(q):
        return np.interp(q, grid, cum)

    assert np.all((s > 0) & (s < v)) and np.all((c > 0) & (c < v))
    assert stats.kstest(s, cdf).pvalue > 1e-3
    assert stats.kstest(c, cdf).pvalue > 1e-3


def test_logbeta_small_surplus_uses_power_proposal():
    assert logbeta_uses_power_proposal(1e-6, 2.0)
    assert not logbeta_uses_power_proposal(20.0, 2.0)
    assert not logbeta_uses_power_proposal(1e-6, 1.0)


def test_logbeta_small_surplus_is_fast(rng):
    p = LogBetaParams(1.0, 2.0)
    trials = [sample_new_weight_logbeta(1e-9, p, rng, return_trials=True)[1] for _ in range(500)]
    assert np.mean(trials) < 3


def test_new_weight_domain(rng):
    with pytest.raises(DomainError):
        sample_new_weight_logbeta(0.0, LogBetaParams(1, 2), rng)
    with pytest.raises(DomainError):
        sample_new_weight_exact(-1.0, 0.5, rng)
