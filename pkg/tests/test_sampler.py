import math

import numpy as np
import pytest
from scipy import stats

from oracles import surplus_conditional_cdf
from pkhybrid.cli import load_dataset
from pkhybrid.diagnostics import ess
from pkhybrid.exceptions import ConfigurationError
from pkhybrid.model import (
    FlatLikelihood,
    LogBetaPrior,
    NormalLikelihood,
    SeatingState,
    StablePrior,
)
from pkhybrid.sampler import (
    DirectSlice,
    HybridSampler,
    MhStable,
    MhStats,
    SliceAux,
    SweepSettings,
    check_compatible,
    default_mh_lambda,
    mh_log_ratio,
    reassign_all,
    update_surplus,
    update_weights,
)
from pkhybrid.stable_math import (
    NGG,
    LogBetaParams,
    NormalizedStable,
    PitmanYor,
    SigmaStableParams,
    log_f_logbeta,
    log_f_sigma,
)

NSTABLE = StablePrior(SigmaStableParams(0.5), NormalizedStable())
PY = StablePrior(SigmaStableParams(0.5), PitmanYor(10.0))
LB = LogBetaPrior(LogBetaParams(1.0, 2.0))


def simple_state(n=3, weights=(0.6, 0.3), surplus=0.5):
    labels = np.arange(n) % len(weights)
    return SeatingState.from_partition(np.zeros(n), labels, list(weights), [0.0] * len(weights),
                                       surplus, [0.0, 0.0, 0.0])


# -------------------------------------------------------------------------- variants


def test_variant_prior_compatibility():
    check_compatible(PY, SliceAux())
    check_compatible(PY, MhStable(50.0))
    check_compatible(LB, DirectSlice())
    with pytest.raises(ConfigurationError):
        check_compatible(LB, SliceAux())
    with pytest.raises(ConfigurationError):
        check_compatible(LB, MhStable())
    with pytest.raises(ConfigurationError):
        check_compatible(PY, DirectSlice())
    with pytest.raises(ConfigurationError):
        MhStable(-1.0)
    with pytest.raises(ConfigurationError):
        HybridSampler(LB, NormalLikelihood(), SliceAux())


def test_default_lambda():
    assert default_mh_lambda(0.5) == 50.0
    assert default_mh_lambda(0.3) == 0.0


def test_settings_validation():
    with pytest.raises(ConfigurationError):
        SweepSettings(n_pool=0)
    with pytest.raises(ConfigurationError):
        SweepSettings(pool_refresh="never")
    with pytest.raises(ConfigurationError):
        SweepSettings(weight_width=0.0)


# -------------------------------------------------------------------------- MH ratio


def test_mh_ratio_identity_proposal():
    assert mh_log_ratio(1.3, 1.3, 5, 0.7, 50.0) == pytest.approx(0.0)


def test_mh_ratio_by_hand():
    assert mh_log_ratio(3.0, 1.0, 2, 1.0, 0.0) == pytest.approx(-2 * math.log(2))


def test_mh_ratio_with_tilt_and_h():
    lam, n, rest, v, v2 = 2.0, 3, 0.5, 0.4, 1.1
    log_h = PitmanYor(1.5).log_h
    expected = (-n * math.log(v2 + rest) - 1.5 * math.log(v2 + rest) - lam * v) - (
        -n * math.log(v + rest) - 1.5 * math.log(v + rest) - lam * v2
    )
    got = mh_log_ratio(v2, v, n, rest, lam, lambda t: log_h(t, 0.5))
    assert got == pytest.approx(expected)


def test_mh_records_acceptance():
    rng = np.random.default_rng(1)
    st_ = simple_state()
    stats_ = MhStats()
    for _ in range(200):
        update_surplus(st_, NSTABLE, MhStable(0.0), rng, stats=stats_)
    assert stats_.proposed == 200 and 0 < stats_.accepted <= 200


# ----------------------------------------------------------- single-coordinate invariance


def run_surplus(prior, variant, n_updates, seed, state):
    rng = np.random.default_rng(seed)
    out = np.empty(n_updates)
    for i in range(n_updates):
        update_surplus(state, prior, variant, rng)
        out[i] = state.surplus
    return out


@pytest.mark.parametrize("variant", [SliceAux(), MhStable(0.0), MhStable(3.0)])
def test_surplus_stationary_stable(variant):
    st_ = simple_state()
    n, rest = st_.n, float(st_.weights.sum())
    draws = run_surplus(NSTABLE, variant, 10**5, 7, st_)
    cdf = surplus_conditional_cdf(n, rest, lambda v: log_f_sigma(v, 0.5), lambda t: 0.0 * t)
    assert stats.kstest(draws, cdf).statistic < 0.02


def test_surplus_stationary_pitman_yor_sigma03():
    prior = StablePrior(SigmaStableParams(0.3), PitmanYor(2.0))
    st_ = simple_state()
    n, rest = st_.n, float(st_.weights.sum())
    draws = run_surplus(prior, SliceAux(), 10**5, 8, st_)
    cdf = surplus_conditional_cdf(n, rest, lambda v: log_f_sigma(v, 0.3), lambda t: -2.0 * np.log(t))
    assert stats.kstest(draws, cdf).statistic < 0.02


def test_surplus_stationary_logbeta():
    st_ = simple_state()
    n, rest = st_.n, float(st_.weights.sum())
    draws = run_surplus(LB, DirectSlice(), 10**5, 9, st_)
    cdf = surplus_conditional_cdf(n, rest, lambda v: log_f_logbeta(v, LogBetaParams(1.0, 2.0)),
                                  lambda t: 0.0 * t)
    assert stats.kstest(draws, cdf).statistic < 0.02


@pytest.mark.parametrize("backend,n_updates", [("compiled", 10**5), ("python", 3 * 10**4)])
def test_weight_stationary_gamma(backend, n_updates):
    # one cluster of size 3, -logBeta(1,1): p(s) ~ (v+s)^-3 s^3 e^-s / s
    prior = LogBetaPrior(LogBetaParams(1.0, 1.0))
    st_ = SeatingState.from_partition(np.zeros(3), [0, 0, 0], [0.5], [0.0], 0.8, [0.0])
    rng = np.random.default_rng(11)
    cfg = SweepSettings(backend=backend)
    draws = np.empty(n_updates)
    for i in range(n_updates):
        update_weights(st_, prior, rng, cfg)
        draws[i] = st_.weights[0]
    cdf = surplus_conditional_cdf(3, 0.8, lambda s: 2 * np.log(s) - s, lambda t: 0.0 * t)
    assert stats.kstest(draws, cdf).statistic < 0.02
    assert np.all(draws > 0)


def test_update_weights_empty_state_is_noop():
    st_ = SeatingState(np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0),
                       np.zeros(0, dtype=np.int64), 1.0, np.zeros(3))
    for backend in ("compiled", "python"):
        out = update_weights(st_, NSTABLE, np.random.default_rng(0), SweepSettings(backend=backend))
        assert out.n_clusters == 0 and out.surplus == 1.0


@pytest.mark.parametrize("prior", [LB, StablePrior(SigmaStableParams(0.3), PitmanYor(1.0)),
                                   StablePrior(SigmaStableParams(0.7), NGG(1.0))])
def test_weight_update_backends_agree(prior):
    a = simple_state(6, (0.6, 0.3, 0.05), 0.4)
    b = a.copy()
    update_weights(a, prior, np.random.default_rng(3), SweepSettings(backend="compiled"))
    update_weights(b, prior, np.random.default_rng(3), SweepSettings(backend="python"))
    assert np.allclose(a.weights, b.weights, rtol=1e-9)


# -------------------------------------------------------------------------- reassignment


def test_single_observation_single_cluster():
    lik = NormalLikelihood(0.0, 1.0, 0.5)
    rng = np.random.default_rng(0)
    st_ = SeatingState.from_partition([0.3], [0], [0.5], [0.0], 0.5, [0.0, 1.0, 2.0])
    for backend in ("compiled", "python"):
        for _ in range(50):
            st_ = reassign_all(st_, PY, lik, rng, SweepSettings(backend=backend))
            st_.validate()
            assert st_.n_clusters == 1


@pytest.mark.parametrize("backend", ["compiled", "python"])
def test_dominant_cluster_is_chosen(backend):
    # base far from the data so new clusters score ~ -(1000)^2, far below the existing cluster
    lik = NormalLikelihood(1000.0, 1e-2, 1.0)
    rng = np.random.default_rng(5)
    settings_ = SweepSettings(backend=backend)
    stay = 0
    for _ in range(10**4):
        st_ = SeatingState.from_partition([0.0, 0.0, 50.0], [0, 0, 1], [1.0, 1.0], [0.0, 50.0], 1.0,
                                          [1000.0, 1000.0, 1000.0])
        st_ = reassign_all(st_, PY, lik, rng, settings_)
        stay += st_.labels[0] == st_.labels[1]
    assert stay / 10**4 > 0.999


def test_reassign_preserves_total_mass():
    lik = NormalLikelihood(0.0, 4.0, 0.5)
    rng = np.random.default_rng(2)
    data = rng.normal(size=30)
    st_ = SeatingState.from_partition(data, np.zeros(30, dtype=int), [0.7], [0.0], 0.9,
                                      [0.0, 0.0, 0.0])
    t0 = st_.total_mass
    for _ in range(20):
        st_ = reassign_all(st_, PY, lik, rng)
        st_.validate()
        assert st_.total_mass == pytest.approx(t0, rel=1e-12)


# -------------------------------------------------------------------------- full sweeps


def test_backends_bit_identical_at_half():
    x = load_dataset()
    lik = NormalLikelihood.from_data(x)
    out = []
    for backend in ("compiled", "python"):
        s = HybridSampler(PY, lik, None, SweepSettings(backend=backend))
        st_, recs = s.run(x, 30, np.random.default_rng(1))
        out.append((st_, [r.K for r in recs]))
    (a, ka), (b, kb) = out
    assert ka == kb
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.weights, b.weights)
    assert a.surplus == b.surplus


@pytest.mark.parametrize("prior,variant", [
    (PY, SliceAux()),
    (PY, MhStable(50.0)),
    (StablePrior(SigmaStableParams(0.3), PitmanYor(10.0)), MhStable(0.0)),
    (StablePrior(SigmaStableParams(0.5), NGG(1.0)), SliceAux()),
    (LB, DirectSlice()),
])
def test_invariants_hold_on_galaxy_data(prior, variant):
    x = load_dataset()
    lik = NormalLikelihood.from_data(x)
    s = HybridSampler(prior, lik, variant)
    rng = np.random.default_rng(4)
    st_ = s.initial_state(x, rng)
    for it in range(1000):
        st_, rec = s.sweep(st_, rng, it)
        st_.validate()
        assert rec.K == st_.n_clusters
        assert rec.total == pytest.approx(st_.surplus + st_.weights.sum(), rel=1e-12)
        assert math.isfinite(rec.log_joint)
        assert np.all(st_.weights < rec.total)


def test_run_is_deterministic_and_returns_post_burn_in():
    x = load_dataset()
    s = HybridSampler(LB, NormalLikelihood.from_data(x))
    a = s.run(x, 60, np.random.default_rng(3), burn_in=20)[1]
    b = s.run(x, 60, np.random.default_rng(3), burn_in=20)[1]
    assert len(a) == 40 and a[0].iteration == 20
    assert [(r.K, r.surplus) for r in a] == [(r.K, r.surplus) for r in b]
    with pytest.raises(ConfigurationError):
        s.run(x, 10, np.random.default_rng(0), burn_in=10)


def test_param_slice_path_runs():
    x = load_dataset()
    s = HybridSampler(PY, NormalLikelihood.from_data(x), None, SweepSettings(param_update="slice"))
    st_, recs = s.run(x, 50, np.random.default_rng(0))
    st_.validate()


def test_prior_only_pair_probability():
    # PY(10, 1/2): P(two draws share a cluster) = (1 - sigma) / (1 + theta) = 1/22
    s = HybridSampler(PY, FlatLikelihood())
    rng = np.random.default_rng(12)
    st_ = s.initial_state(np.zeros(2), rng)
    same = np.empty(10**5)
    for i in range(same.size):
        st_, _ = s.sweep(st_, rng, i, log_joint=False)
        same[i] = st_.n_clusters == 1
    se = same.std() / math.sqrt(ess(same).ess)
    assert abs(same.mean() - 1 / 22) < 3 * se
