import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from pkhybrid.exceptions import DomainError
from pkhybrid.stable_math import (
    NGG,
    LogBetaParams,
    NormalizedStable,
    PitmanYor,
    SigmaStableParams,
    UnitTilt,
    log_A_scalar,
    log_f_logbeta,
    log_f_sigma,
    log_f_sigma_quadrature,
    log_h,
    log_levy_logbeta,
    log_levy_sigma,
    stable_log_density,
    zolotarev_A,
)


def half_closed_form(t):
    return -1.5 * np.log(t) - 1 / (4 * t) - math.log(2 * math.sqrt(math.pi))


# ---------------------------------------------------------------- parameters


def test_sigma_range_enforced():
    for bad in (0.0, 0.05, 0.95, 1.0, -0.3, 1.5):
        with pytest.raises(DomainError):
            SigmaStableParams(bad)
    assert SigmaStableParams(0.3).tail_exponent == pytest.approx(0.3 / 0.7)


def test_rational_form_must_match():
    assert SigmaStableParams.from_ratio(1, 3).rational == (1, 3)
    with pytest.raises(DomainError):
        SigmaStableParams(0.5, (2, 4))
    with pytest.raises(DomainError):
        SigmaStableParams(0.5, (1, 3))


def test_logbeta_params_validated():
    with pytest.raises(DomainError):
        LogBetaParams(0.0, 2.0)
    with pytest.raises(DomainError):
        LogBetaParams(1.0, 0.5)


def test_tilt_params_validated():
    with pytest.raises(DomainError):
        NGG(0.0)


# ---------------------------------------------------------------- f_sigma


def test_half_stable_at_one():
    assert math.exp(log_f_sigma(1.0, 0.5)) == pytest.approx(0.219695644733861, rel=1e-12)


def test_half_stable_at_quarter():
    # closed form 8 e^-1 / (2 sqrt(pi)) = 0.830215
    exact = 8 * math.exp(-1) / (2 * math.sqrt(math.pi))
    assert math.exp(log_f_sigma(0.25, 0.5)) == pytest.approx(exact, rel=1e-12)
    assert exact == pytest.approx(0.83024, abs=5e-5)


def test_half_stable_series_on_log_grid():
    t = np.geomspace(0.05, 20, 200)
    err = np.abs(log_f_sigma(t, 0.5) - half_closed_form(t))
    assert err.max() < 1e-8


def test_quadrature_matches_series_sigma_03_at_one():
    assert log_f_sigma(1.0, 0.3) == pytest.approx(log_f_sigma_quadrature(1.0, 0.3), abs=1e-8)


@pytest.mark.parametrize("t", [1.0, 2.0])
def test_quadrature_matches_closed_form(t):
    assert log_f_sigma_quadrature(t, 0.5) == pytest.approx(half_closed_form(t), abs=1e-6)


@pytest.mark.parametrize("sigma", [0.3, 0.5, 0.7])
def test_quadrature_agrees_with_series(sigma):
    for t in np.geomspace(0.1, 10, 15):
        assert log_f_sigma(t, sigma) == pytest.approx(log_f_sigma_quadrature(t, sigma), abs=1e-6)


@pytest.mark.parametrize("sigma", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_finite_at_extremes(sigma):
    vals = log_f_sigma(np.array([1e-4, 1e-2, 1.0, 1e2, 1e4]), sigma)
    assert np.all(np.isfinite(vals) | (vals == -np.inf))
    assert not np.any(np.isnan(vals))
    assert np.isfinite(vals[1:]).all()


def test_non_positive_t_rejected():
    with pytest.raises(DomainError):
        log_f_sigma(0.0, 0.5)
    with pytest.raises(DomainError):
        log_f_sigma_quadrature(-1.0, 0.5)


@pytest.mark.parametrize("sigma", [0.3, 0.5])
@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_laplace_transform(sigma, lam):
    def g(x):
        t = math.exp(x)
        return math.exp(log_f_sigma(t, sigma) - lam * t + x)

    val, _ = integrate.quad(g, -30, 8, limit=400, epsabs=1e-12)
    assert val == pytest.approx(math.exp(-lam**sigma), abs=1e-4)


@pytest.mark.parametrize("sigma", [0.2, 0.3, 0.5, 0.7])
def test_tabulated_density_matches_exact(sigma):
    table = stable_log_density(sigma)
    t = np.geomspace(math.exp(table.log_t_min) * 1.01, 1e6, 300)
    assert np.max(np.abs(table(t) - log_f_sigma(t, sigma))) < 1e-7
    # below the table the asymptotic extension stays close to the series
    tl = math.exp(table.log_t_min) * np.array([0.99, 0.9])
    assert np.max(np.abs(table(tl) - log_f_sigma(tl, sigma))) < 1e-3 * np.max(np.abs(table(tl)))


# ---------------------------------------------------------------- A(z)


def test_A_half_at_half():
    assert zolotarev_A(0.5, 0.5) == pytest.approx(0.5, rel=1e-14)


def test_A_limit_at_zero_is_finite():
    # (1 - s) s^(s/(1-s)) at s = 1/2 is 1/4
    assert zolotarev_A(1e-12, 0.5) == pytest.approx(0.25, rel=1e-9)


def test_A_increasing_for_half():
    z = np.linspace(0.01, 0.99, 50)
    a = zolotarev_A(z, 0.5)
    assert np.all(np.diff(a) > 0)
    assert zolotarev_A(0.9, 0.5) > zolotarev_A(0.5, 0.5)


def test_A_domain():
    for z in (0.0, 1.0, -0.1):
        with pytest.raises(DomainError):
            zolotarev_A(z, 0.5)


@given(st.floats(1e-6, 1 - 1e-6), st.floats(0.06, 0.94))
@settings(max_examples=200, deadline=None)
def test_A_scalar_matches_vector_form(z, sigma):
    direct = (
        math.sin(sigma * math.pi * z) ** (sigma / (1 - sigma))
        * math.sin((1 - sigma) * math.pi * z)
        / math.sin(math.pi * z) ** (1 / (1 - sigma))
    )
    assert math.exp(log_A_scalar(z, sigma)) == pytest.approx(direct, rel=1e-8)
    assert float(zolotarev_A(z, sigma)) == pytest.approx(direct, rel=1e-8)


# ---------------------------------------------------------------- Levy measures


def test_levy_sigma_values():
    assert math.exp(log_levy_sigma(1.0, 0.5)) == pytest.approx(0.5 / math.sqrt(math.pi))
    assert log_levy_sigma(4.0, 0.5) == pytest.approx(math.log(0.282095) - 1.5 * math.log(4), abs=1e-6)


@given(st.floats(0.06, 0.94))
def test_levy_sigma_at_one(sigma):
    assert log_levy_sigma(1.0, sigma) == pytest.approx(math.log(sigma) - math.lgamma(1 - sigma))


def test_levy_domain():
    with pytest.raises(DomainError):
        log_levy_sigma(0.0, 0.5)
    with pytest.raises(DomainError):
        log_levy_logbeta(-1.0, LogBetaParams(1, 2))


def test_logbeta_density_values():
    assert log_f_logbeta(0.7, LogBetaParams(1, 1)) == pytest.approx(-0.7)
    assert log_f_logbeta(0.5, LogBetaParams(2, 1)) == pytest.approx(math.log(2 * math.exp(-1)))


@pytest.mark.parametrize("a,b", [(1, 1), (1, 2), (2, 3)])
def test_logbeta_density_normalized(a, b):
    p = LogBetaParams(a, b)
    val, _ = integrate.quad(lambda t: math.exp(log_f_logbeta(t, p)), 0, np.inf, epsabs=1e-12)
    assert val == pytest.approx(1.0, abs=1e-6)


def test_logbeta_density_small_t_stable():
    p = LogBetaParams(1, 2)
    t = 1e-12
    assert log_f_logbeta(t, p) == pytest.approx(math.log(2) + math.log(t), rel=1e-9)


def test_logbeta_levy_gamma_case():
    assert log_levy_logbeta(1.0, LogBetaParams(1, 1)) == pytest.approx(-1.0)


def test_logbeta_levy_small_x_limit():
    p = LogBetaParams(1, 2)
    for x in (1e-8, 1e-10, 1e-14):
        assert math.exp(log_levy_logbeta(x, p)) * x == pytest.approx(2.0, rel=1e-6)


def test_logbeta_levy_matches_naive():
    a, b, x = 2.0, 3.0, 0.5
    naive = math.exp(-a * x) * (1 - math.exp(-b * x)) / (x * (1 - math.exp(-x)))
    assert log_levy_logbeta(x, LogBetaParams(a, b)) == pytest.approx(math.log(naive), abs=1e-12)


def test_logbeta_density_is_levy_size_biased_identity():
    # t f(t) = int_0^t s rho(s) f(t - s) ds characterizes f as the total-mass law of rho
    p = LogBetaParams(1.0, 2.0)
    for t in (0.3, 1.0, 2.5):
        val, _ = integrate.quad(
            lambda s: s * math.exp(log_levy_logbeta(s, p) + log_f_logbeta(t - s, p)), 0, t,
            epsabs=1e-13,
        )
        assert val == pytest.approx(t * math.exp(log_f_logbeta(t, p)), rel=1e-7)


# ---------------------------------------------------------------- tilts


def test_tilt_values():
    p = SigmaStableParams(0.5)
    assert log_h(2.0, NormalizedStable(), p) == 0.0
    assert log_h(2.0, PitmanYor(10.0), p) == pytest.approx(-10 * math.log(2))
    assert log_h(3.0, NGG(1.0), p) == pytest.approx(-3.0)
    assert log_h(3.0, UnitTilt()) == 0.0


def test_ngg_rate_normalizes_with_laplace_transform():
    # E[exp(-lam T)] under f_sigma equals exp(-tau) when lam = tau^(1/sigma)
    sigma, tau = 0.5, 2.0
    lam = NGG(tau).rate(sigma)
    assert lam == pytest.approx(4.0)
    val, _ = integrate.quad(
        lambda x: math.exp(log_f_sigma(math.exp(x), sigma) - lam * math.exp(x) + x), -30, 8, limit=400
    )
    assert val == pytest.approx(math.exp(-tau), abs=1e-6)


def test_stable_moments_via_density():
    # E[T^p] = Gamma(1 - p/sigma) / Gamma(1 - p) for p < sigma
    sigma, q = 0.5, -0.5
    val, _ = integrate.quad(
        lambda x: math.exp(log_f_sigma(math.exp(x), sigma) + (q + 1) * x), -30, 40, limit=400
    )
    assert val == pytest.approx(special.gamma(1 - q / sigma) / special.gamma(1 - q), rel=1e-6)
