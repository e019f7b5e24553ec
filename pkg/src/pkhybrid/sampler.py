"""Hybrid conditional/marginal Gibbs sampler for Poisson-Kingman mixtures.

One sweep updates the surplus mass ``V`` (auxiliary slice, independent MH or
direct slice), slice-updates the size-biased weights, reseats every
observation with the AddTable & ReUse scheme and redraws the cluster means.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kn
from . import model
from .exceptions import ConfigurationError, PreconditionError, SamplingError
from .model import FlatLikelihood, LogBetaPrior, SeatingState, StablePrior
from .random_kit import sample_tilted_stable
from .stable_math import log_A_scalar
from .slice_kit import SliceConfig, slice_sample, slice_sample_positive


# ------------------------------------------------------------------------- variants


@dataclass(frozen=True)
class SliceAux:
    """Slice-update Kanter's ``Z`` then ``V`` from their joint augmentation."""

    name = "slice_aux"


@dataclass(frozen=True)
class MhStable:
    """Independent MH for ``V`` with an exponentially tilted stable proposal."""

    lam: float = 0.0
    name = "mh"

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ConfigurationError("MH tilting parameter lambda must be >= 0")


@dataclass(frozen=True)
class DirectSlice:
    """Slice-update ``V`` against its closed-form conditional."""

    name = "direct"


SamplerVariant = SliceAux | MhStable | DirectSlice


def check_compatible(prior, variant) -> None:
    if isinstance(variant, (SliceAux, MhStable)):
        if not isinstance(prior, StablePrior):
            raise ConfigurationError(f"{variant.name} requires a sigma-stable prior")
    elif isinstance(variant, DirectSlice):
        if not isinstance(prior, LogBetaPrior):
            raise ConfigurationError("direct slice updates require the -logBeta prior")
    else:
        raise ConfigurationError(f"unknown sampler variant {variant!r}")


def default_variant(prior) -> SamplerVariant:
    return SliceAux() if isinstance(prior, StablePrior) else DirectSlice()


def default_mh_lambda(sigma: float) -> float:
    """50 at sigma = 1/2 and 0 otherwise."""
    return 50.0 if sigma == 0.5 else 0.0


@dataclass(frozen=True)
class SweepSettings:
    """Tuning knobs of one sweep."""

    n_pool: int = 3
    pool_refresh: str = "per_obs"
    scan_order: str = "fixed"
    param_update: str = "conjugate"
    surplus_width: float = 1.0
    weight_width: float = 1.0
    z_width: float = 0.1
    max_steps: int = 32
    grid: int = 512
    backend: str = "compiled"

    def __post_init__(self):
        if self.n_pool < 1:
            raise ConfigurationError("pool size M must be >= 1")
        if self.pool_refresh not in ("per_obs", "per_slot"):
            raise ConfigurationError("pool_refresh must be 'per_obs' or 'per_slot'")
        if self.scan_order not in ("fixed", "random"):
            raise ConfigurationError("scan_order must be 'fixed' or 'random'")
        if self.backend not in ("compiled", "python"):
            raise ConfigurationError("backend must be 'compiled' or 'python'")
        if self.param_update not in ("conjugate", "slice"):
            raise ConfigurationError("param_update must be 'conjugate' or 'slice'")
        for name in ("surplus_width", "weight_width", "z_width"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")


@dataclass
class MhStats:
    proposed: int = 0
    accepted: int = 0

    @property
    def rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else math.nan


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    K: int
    surplus: float
    total: float
    log_joint: float
    sizes: tuple
    seconds: float
    accept_mh: float = math.nan


# -------------------------------------------------------------------------- updates


def mh_log_ratio(v_new, v_old, n, rest, lam, log_h=lambda t: 0.0) -> float:
    """Log acceptance ratio of the independent tilted-stable proposal."""
    t_new, t_old = v_new + rest, v_old + rest
    return (
        (-n * math.log(t_new) + log_h(t_new) - lam * v_old)
        - (-n * math.log(t_old) + log_h(t_old) - lam * v_new)
    )


def update_surplus(state: SeatingState, prior, variant, rng, settings: SweepSettings = SweepSettings(),
                   stats: MhStats | None = None) -> SeatingState:
    check_compatible(prior, variant)
    n = state.n
    rest = float(state.weights.sum())
    log_h = prior.log_h_scalar

    if isinstance(variant, SliceAux):
        sigma = prior.sigma
        k = sigma / (1 - sigma)
        zcfg = SliceConfig(settings.z_width, settings.max_steps, 0.0, 1.0)
        v = state.surplus
        state.kanter_z = slice_sample(lambda z: model.log_cond_z(z, v, prior), state.kanter_z, zcfg, rng)
        a_z = math.exp(log_A_scalar(state.kanter_z, sigma))

        def log_v(x):
            t = x + rest
            return -n * math.log(t) + log_h(t) - math.log(x) / (1 - sigma) - x ** -k * a_z

        state.surplus = slice_sample_positive(log_v, v, rng, settings.surplus_width, settings.max_steps)
    elif isinstance(variant, MhStable):
        v_new = sample_tilted_stable(prior.params, variant.lam, rng)
        log_r = mh_log_ratio(v_new, state.surplus, n, rest, variant.lam, log_h) if v_new > 0 else -math.inf
        ok = log_r >= 0 or math.log(rng.random()) < log_r
        if stats is not None:
            stats.proposed += 1
            stats.accepted += int(ok)
        if ok:
            state.surplus = float(v_new)
    else:
        log_f = prior.log_f_scalar

        def log_v(x):
            t = x + rest
            return -n * math.log(t) + log_h(t) + log_f(x)

        state.surplus = slice_sample_positive(log_v, state.surplus, rng, settings.surplus_width,
                                              settings.max_steps)
    return state


def update_weights(state: SeatingState, prior, rng, settings: SweepSettings = SweepSettings()) -> SeatingState:
    """Slice-update each size-biased weight, visiting clusters in random order.

    With ``V`` held fixed the total moves with the weight, so the weight's only
    constraint is positivity.  The scan order is redrawn every call: cluster
    order after reassignment depends on the state (new clusters are appended),
    and a state-dependent sequential scan is not invariant.
    """
    n = state.n
    visit = rng.permutation(state.n_clusters)
    if settings.backend == "compiled":
        spec = _kernel_spec(prior)
        status = kn.update_weights(
            rng, state.weights, state.sizes, visit, state.surplus, n,
            settings.weight_width, settings.max_steps, spec["h_kind"], spec["h_par"],
            spec["l_kind"], spec["sigma"], spec["a"], spec["b"],
        )
        if status != kn.OK:
            raise SamplingError("slice bracket collapsed while updating a weight")
        return state
    log_h, log_levy = prior.log_h_scalar, prior.log_levy_scalar
    w = state.weights
    for i in visit:
        base = state.surplus + float(w.sum() - w[i])
        ni = int(state.sizes[i])

        def log_s(s):
            t = base + s
            return -n * math.log(t) + log_h(t) + ni * math.log(s) + log_levy(s)

        w[i] = slice_sample_positive(log_s, float(w[i]), rng, settings.weight_width, settings.max_steps)
    return state


_SPEC_CACHE: dict = {}


def _kernel_spec(prior) -> dict:
    spec = _SPEC_CACHE.get(prior)
    if spec is None:
        spec = _SPEC_CACHE[prior] = prior.kernel_spec()
    return spec


def reassign_all(state: SeatingState, prior, lik, rng, settings: SweepSettings = SweepSettings()) -> SeatingState:
    """AddTable & ReUse pass over every observation."""
    M = settings.n_pool
    if state.pool.shape[0] != M:
        state.pool = np.atleast_1d(lik.sample_base(rng, M)).astype(float)
    flat = isinstance(lik, FlatLikelihood)
    prec = 0.0 if flat else 0.5 / lik.sigma1_sq
    order = np.arange(state.n) if settings.scan_order == "fixed" else rng.permutation(state.n)
    per_obs = settings.pool_refresh == "per_obs"
    if settings.backend == "compiled":
        return _reassign_compiled(state, prior, lik, rng, settings, order, flat, prec, per_obs)
    data, labels = state.data, state.labels
    weights, params, sizes = state.weights, state.params, state.sizes
    v = state.surplus
    log_m = math.log(M)

    for i in order:
        x = data[i]
        c = labels[i]
        sizes[c] -= 1
        if sizes[c] == 0:
            state.pool[rng.integers(M)] = params[c]
            v += weights[c]
            weights = np.delete(weights, c)
            params = np.delete(params, c)
            sizes = np.delete(sizes, c)
            labels[labels > c] -= 1
        K = weights.shape[0]
        with np.errstate(divide="ignore"):
            scores = np.empty(K + M)
            scores[:K] = np.log(weights)
            scores[K:] = math.log(v) - log_m if v > 0 else -math.inf
        if not flat:
            scores[:K] -= prec * (x - params) ** 2
            scores[K:] -= prec * (x - state.pool) ** 2
        p = np.exp(scores - scores.max())
        cum = np.cumsum(p)
        j = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        j = min(j, K + M - 1)
        if j >= K:
            slot = j - K
            s_new = float(prior.sample_new_weight(v, rng))
            if not 0 < s_new < v:
                raise PreconditionError("new weight must lie strictly inside (0, V)")
            v -= s_new
            weights = np.append(weights, s_new)
            params = np.append(params, state.pool[slot])
            sizes = np.append(sizes, 1)
            labels[i] = K
            state.pool[slot] = lik.sample_base(rng)
        else:
            sizes[j] += 1
            labels[i] = j
        if per_obs:
            state.pool = np.atleast_1d(lik.sample_base(rng, M)).astype(float)

    if not per_obs:
        state.pool = np.atleast_1d(lik.sample_base(rng, M)).astype(float)
    state.weights, state.params, state.sizes, state.surplus = weights, params, sizes, v
    return state


def _reassign_compiled(state, prior, lik, rng, settings, order, flat, prec, per_obs):
    spec = _kernel_spec(prior)
    K, cap = state.n_clusters, state.n + 1
    weights, params, sizes = np.zeros(cap), np.zeros(cap), np.zeros(cap, dtype=np.int64)
    weights[:K], params[:K], sizes[:K] = state.weights, state.params, state.sizes
    pool = np.ascontiguousarray(state.pool, dtype=float)
    mu0, sd0 = (0.0, 0.0) if flat else (lik.mu0, math.sqrt(lik.sigma0_sq))
    K, v, status = kn.reassign(
        rng, state.data, order.astype(np.int64), state.labels, weights, params, sizes, K,
        state.surplus, pool, per_obs, flat, prec, mu0, sd0, spec["nw_kind"], spec["sigma"],
        spec["b"], settings.grid, *spec["table"], np.empty(cap + pool.shape[0]),
    )
    if status != kn.OK:
        raise PreconditionError("new weight must lie strictly inside (0, V)")
    state.weights, state.params, state.sizes = weights[:K].copy(), params[:K].copy(), sizes[:K].copy()
    state.surplus, state.pool = float(v), pool
    return state


def update_cluster_params(state: SeatingState, lik, rng, settings: SweepSettings = SweepSettings()) -> SeatingState:
    """Conjugate redraw of every cluster mean, or a slice update per mean."""
    if settings.param_update == "conjugate" or isinstance(lik, FlatLikelihood):
        return model.update_cluster_params(state, lik, rng)
    for k in range(state.n_clusters):
        xs = state.data[state.labels == k]

        def log_post(y):
            return float(lik.log_base(y) + np.sum(lik.log_lik(xs, y)))

        cfg = SliceConfig(math.sqrt(lik.sigma0_sq), settings.max_steps)
        state.params[k] = slice_sample(log_post, float(state.params[k]), cfg, rng)
    return state


def gibbs_sweep(state: SeatingState, prior, lik, variant, rng, settings: SweepSettings = SweepSettings(),
                iteration: int = 0, log_joint: bool = True) -> tuple[SeatingState, TraceRecord]:
    t0 = time.perf_counter()
    stats = MhStats()
    state = update_surplus(state, prior, variant, rng, settings, stats)
    state = update_weights(state, prior, rng, settings)
    state = reassign_all(state, prior, lik, rng, settings)
    state = update_cluster_params(state, lik, rng, settings)
    lj = model.log_joint(state, prior, lik) if log_joint else math.nan
    record = TraceRecord(
        iteration, state.n_clusters, state.surplus, state.total_mass, lj,
        tuple(int(c) for c in state.sizes), time.perf_counter() - t0,
        stats.rate if isinstance(variant, MhStable) else math.nan,
    )
    return state, record


# -------------------------------------------------------------------------- driver


@dataclass
class HybridSampler:
    """A configured chain: prior, likelihood, surplus variant and sweep settings."""

    prior: object
    lik: object
    variant: object = None
    settings: SweepSettings = field(default_factory=SweepSettings)

    def __post_init__(self):
        if self.variant is None:
            self.variant = default_variant(self.prior)
        check_compatible(self.prior, self.variant)

    def initial_state(self, data, rng) -> SeatingState:
        return model.initial_state(data, self.prior, self.lik, rng, self.settings.n_pool)

    def sweep(self, state, rng, iteration=0, log_joint=True):
        return gibbs_sweep(state, self.prior, self.lik, self.variant, rng, self.settings, iteration, log_joint)

    def run(self, data, n_iter: int, rng, burn_in: int = 0, state: SeatingState | None = None,
            callback=None, log_joint: bool = True):
        """Run ``n_iter`` sweeps; returns the final state and post-burn-in records."""
        if not 0 <= burn_in < n_iter:
            raise ConfigurationError("need 0 <= burn_in < n_iter")
        if state is None:
            state = self.initial_state(data, rng)
        records = []
        for it in range(n_iter):
            state, rec = self.sweep(state, rng, it, log_joint)
            if callback is not None:
                callback(state, rec)
            if it >= burn_in:
                records.append(rec)
        return state, records
