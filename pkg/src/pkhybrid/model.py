"""Poisson-Kingman mixture model: priors, likelihoods, seating state and targets.

The state keeps the occupied clusters (size-biased weight, mean parameter,
member count), the surplus mass ``V`` of all unoccupied atoms, Kanter's
auxiliary ``z`` and a pool of ``M`` parameters for prospective new clusters.
All log-densities below are unnormalized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import stable_math as sm
from .exceptions import DomainError, PreconditionError, SamplingError
from .random_kit import (
    sample_new_weight_exact,
    sample_new_weight_generic,
    sample_new_weight_logbeta,
    sample_tilted_stable,
    _stable_draws,
)
from .stable_math import (
    NGG,
    LogBetaParams,
    NormalizedStable,
    PitmanYor,
    SigmaStableParams,
    UnitTilt,
)

_LOG_2PI = math.log(2 * math.pi)


# --------------------------------------------------------------------------- priors


@dataclass(frozen=True)
class StablePrior:
    """sigma-stable Poisson-Kingman prior indexed by a tilt ``h``."""

    params: SigmaStableParams
    tilt: PitmanYor | NormalizedStable | NGG = field(default_factory=NormalizedStable)

    def __post_init__(self):
        if not isinstance(self.params, SigmaStableParams):
            object.__setattr__(self, "params", SigmaStableParams(self.params))
        if not isinstance(self.tilt, (PitmanYor, NormalizedStable, NGG)):
            raise DomainError(f"unsupported tilt for the stable class: {self.tilt!r}")
        if isinstance(self.tilt, PitmanYor) and not self.tilt.theta > -self.sigma:
            raise DomainError("Pitman-Yor requires theta > -sigma")

    @property
    def sigma(self) -> float:
        return self.params.sigma

    @property
    def name(self) -> str:
        return {PitmanYor: "pitman_yor", NormalizedStable: "normalized_stable", NGG: "ngg"}[
            type(self.tilt)
        ]

    def log_f(self, t):
        """Total-mass log-density, tabulated for speed."""
        return sm.stable_log_density(self.sigma)(t)

    def log_levy(self, x):
        return math.log(self.sigma) - math.lgamma(1 - self.sigma) - (self.sigma + 1) * np.log(x)

    def log_h(self, t):
        return self.tilt.log_h(t, self.sigma)

    # scalar versions for the inner loops of the sampler
    def log_levy_scalar(self, x: float) -> float:
        return math.log(self.sigma) - math.lgamma(1 - self.sigma) - (self.sigma + 1) * math.log(x)

    def log_h_scalar(self, t: float) -> float:
        if isinstance(self.tilt, PitmanYor):
            return -self.tilt.theta * math.log(t)
        if isinstance(self.tilt, NGG):
            return -self.tilt.rate(self.sigma) * t
        return 0.0

    def new_weight_pieces(self, v, grid=512):
        """Grid pieces for the new-weight density ``s^-sigma f(v - s)`` on ``(0, v)``.

        On ``s <= v/2`` the coordinate ``w = (s/v)^(1-sigma)`` removes the
        ``s^-sigma`` singularity; on ``s > v/2`` the coordinate ``u = log(v - s)``
        resolves the bulk of ``f`` when ``v`` is large.
        """
        sigma = self.sigma
        table = sm.stable_log_density(sigma)
        w = np.linspace(0.0, 0.5 ** (1 - sigma), grid + 1)
        rest = -v * np.expm1(np.log(np.maximum(w, 1e-300)) / (1 - sigma))
        log_a = (1 - sigma) * math.log(v) - math.log(1 - sigma) + table(rest)
        top = math.log(v / 2)
        lo = max(top - 60.0, -math.log(800.0 / table.a0) / table.k)
        u = np.linspace(min(lo, top - 5.0), top, grid + 1)
        r = np.exp(u)
        log_b = table(r) + u - sigma * np.log(v - r)
        return [
            (w, log_a, lambda x: v * x ** (1 / (1 - sigma))),
            (u, log_b, lambda x: v - np.exp(x)),
        ]

    def kernel_spec(self) -> dict:
        from . import _kernels as kn

        if isinstance(self.tilt, PitmanYor):
            h_kind, h_par = kn.H_PY, self.tilt.theta
        elif isinstance(self.tilt, NGG):
            h_kind, h_par = kn.H_NGG, self.tilt.rate(self.sigma)
        else:
            h_kind, h_par = kn.H_NONE, 0.0
        return dict(
            h_kind=h_kind, h_par=float(h_par), l_kind=kn.L_STABLE, sigma=self.sigma, a=0.0, b=1.0,
            nw_kind=kn.NW_HALF if self.sigma == 0.5 else kn.NW_GRID,
            table=sm.stable_log_density(self.sigma).kernel_args(),
        )

    def sample_new_weight(self, v, rng):
        if self.sigma == 0.5:
            return sample_new_weight_exact(v, self.params, rng)
        return sample_new_weight_generic(v, self, rng)

    def sample_total_mass(self, rng, size=None):
        """Exact draws from ``h(t) f_sigma(t)``."""
        if isinstance(self.tilt, NormalizedStable):
            return sample_tilted_stable(self.params, 0.0, rng, size)
        if isinstance(self.tilt, NGG):
            return sample_tilted_stable(self.params, self.tilt.rate(self.sigma), rng, size)
        return _polynomially_tilted_stable(self.sigma, self.tilt.theta, rng, size)


def _polynomially_tilted_stable(sigma, theta, rng, size=None, max_rounds=10**6):
    """Draws with density proportional to ``t**-theta f_sigma(t)``, ``theta > -sigma``.

    Reweighting Kanter's representation ``T = (A(U)/E)^((1-s)/s)`` by ``T**-theta``
    factorizes: ``E ~ Gamma(1 - c)`` and ``U`` has density proportional to
    ``A(u)**c`` with ``c = -theta (1 - sigma) / sigma``.  ``U`` is drawn by
    rejection from a uniform (``c <= 0``) or from a density proportional to
    ``(1 - u)**(-c / (1 - sigma))`` (``c > 0``).
    """
    n = 1 if size is None else int(np.prod(size))
    c = -theta * (1 - sigma) / sigma
    la0 = sm.log_A_at_zero(sigma)
    u_out = np.empty(n)
    uc_out = np.empty(n)
    pending = np.arange(n)
    if c > 0:
        q = c / (1 - sigma)
        grid = np.linspace(1e-6, 1 - 1e-6, 20001)
        log_env = sm._log_A(grid, 1 - grid, sigma) + np.log1p(-grid) / (1 - sigma)
        bound = c * (max(log_env.max(), la0) + 1e-3)
    for _ in range(max_rounds):
        k = pending.size
        if c <= 0:
            u = rng.random(k)
            uc = 1 - u
            log_acc = c * (sm._log_A(u, uc, sigma) - la0)
        else:
            uc = rng.random(k) ** (1 / (1 - q))  # 1 - U, density prop. to x^-q
            u = 1 - uc
            log_acc = c * (sm._log_A(u, uc, sigma) + np.log(uc) / (1 - sigma)) - bound
        ok = (u > 0) & (uc > 0) & (np.log(rng.random(k)) < log_acc)
        u_out[pending[ok]] = u[ok]
        uc_out[pending[ok]] = uc[ok]
        pending = pending[~ok]
        if pending.size == 0:
            break
    else:
        raise SamplingError("polynomially tilted stable sampler exceeded its iteration cap")
    e = rng.gamma(1 - c, 1.0, n)
    t = np.exp((sm._log_A(u_out, uc_out, sigma) - np.log(e)) * (1 - sigma) / sigma)
    return float(t[0]) if size is None else t.reshape(size)


@dataclass(frozen=True)
class LogBetaPrior:
    """-logBeta(a, b) Poisson-Kingman prior with ``h = 1``."""

    params: LogBetaParams
    tilt: UnitTilt = field(default_factory=UnitTilt)

    name = "logbeta"

    def log_f(self, t):
        return sm.log_f_logbeta(t, self.params)

    def log_levy(self, x):
        return sm.log_levy_logbeta(x, self.params)

    def log_h(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def log_levy_scalar(self, x: float) -> float:
        a, b = self.params.a, self.params.b
        return math.log(math.expm1(-b * x) / math.expm1(-x)) - a * x - math.log(x)

    def log_h_scalar(self, t: float) -> float:
        return 0.0

    def log_f_scalar(self, t: float) -> float:
        a, b = self.params.a, self.params.b
        out = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) - a * t
        if b != 1:
            out += (b - 1) * math.log(-math.expm1(-t))
        return out

    def new_weight_pieces(self, v, grid=512):
        """Single grid piece in ``w = s / v``; the density is bounded by ``b``."""
        w = np.linspace(0.0, 1.0, grid + 1)
        s = v * w
        b = self.params.b
        with np.errstate(divide="ignore", invalid="ignore"):
            logd = np.log(np.where(s > 0, np.expm1(-b * s) / np.expm1(-s), b))
            if b != 1:
                logd = logd + (b - 1) * np.log(-np.expm1(s - v))
        return [(w, logd, lambda x: v * x)]

    def kernel_spec(self) -> dict:
        from . import _kernels as kn

        dummy = (0.0, 1.0, np.zeros((4, 1)), 1.0, 1.0, 0.0, 0.0, 0.0)
        return dict(
            h_kind=kn.H_NONE, h_par=0.0, l_kind=kn.L_LOGBETA, sigma=0.5, a=self.params.a,
            b=self.params.b, nw_kind=kn.NW_LOGBETA, table=dummy,
        )

    def sample_new_weight(self, v, rng):
        return sample_new_weight_logbeta(v, self.params, rng)

    def sample_total_mass(self, rng, size=None):
        y = rng.beta(self.params.a, self.params.b, 1 if size is None else size)
        t = -np.log(y)
        return float(np.ravel(t)[0]) if size is None else t


PriorSpec = StablePrior | LogBetaPrior


# ---------------------------------------------------------------------- likelihoods


@dataclass(frozen=True)
class NormalLikelihood:
    """Normal components with shared variance and a Normal base distribution."""

    mu0: float = 0.0
    sigma0_sq: float = 1.0
    sigma1_sq: float = 0.5

    def __post_init__(self):
        if not (self.sigma0_sq > 0 and self.sigma1_sq > 0):
            raise DomainError("variances must be strictly positive")

    @classmethod
    def from_data(cls, x, sigma1_sq: float = 0.5) -> "NormalLikelihood":
        """Empirical-Bayes base: sample mean and sample variance of ``x``."""
        x = np.asarray(x, dtype=float)
        var = float(np.var(x, ddof=1)) if x.size > 1 else 1.0
        return cls(float(np.mean(x)), var if var > 0 else 1.0, sigma1_sq)

    def log_base(self, y):
        return -0.5 * (_LOG_2PI + math.log(self.sigma0_sq)) - 0.5 * (y - self.mu0) ** 2 / self.sigma0_sq

    def log_lik(self, x, y):
        return -0.5 * (_LOG_2PI + math.log(self.sigma1_sq)) - 0.5 * (x - y) ** 2 / self.sigma1_sq

    def sample_base(self, rng, size=None):
        return rng.normal(self.mu0, math.sqrt(self.sigma0_sq), size)

    def sample_data(self, means, rng):
        return rng.normal(means, math.sqrt(self.sigma1_sq))

    def posterior(self, count, total):
        """Mean and variance of a cluster mean given ``count`` members summing to ``total``."""
        prec = 1.0 / self.sigma0_sq + count / self.sigma1_sq
        mean = (self.mu0 / self.sigma0_sq + total / self.sigma1_sq) / prec
        return mean, 1.0 / prec


@dataclass(frozen=True)
class FlatLikelihood:
    """Constant likelihood: the chain then targets the prior over partitions."""

    def log_base(self, y):
        return 0.0 * np.asarray(y, dtype=float)

    def log_lik(self, x, y):
        return 0.0 * (np.asarray(x, dtype=float) - np.asarray(y, dtype=float))

    def sample_base(self, rng, size=None):
        return 0.0 if size is None else np.zeros(size)

    def sample_data(self, means, rng):
        return np.zeros_like(np.asarray(means, dtype=float))

    def posterior(self, count, total):
        return 0.0, 0.0


LikelihoodSpec = NormalLikelihood


# ---------------------------------------------------------------------------- state


@dataclass(frozen=True)
class Cluster:
    members: frozenset
    weight: float
    param: float


@dataclass
class SeatingState:
    """Occupied clusters (in creation order), surplus mass and the ReUse pool."""

    data: np.ndarray
    labels: np.ndarray
    weights: np.ndarray
    params: np.ndarray
    sizes: np.ndarray
    surplus: float
    pool: np.ndarray
    kanter_z: float = 0.5

    @property
    def n(self) -> int:
        return int(self.data.shape[0])

    @property
    def n_clusters(self) -> int:
        return int(self.weights.shape[0])

    @property
    def total_mass(self) -> float:
        return float(self.surplus + self.weights.sum())

    @property
    def clusters(self) -> list[Cluster]:
        return [
            Cluster(frozenset(np.flatnonzero(self.labels == k).tolist()), float(w), float(p))
            for k, (w, p) in enumerate(zip(self.weights, self.params))
        ]

    def copy(self) -> "SeatingState":
        return SeatingState(
            self.data.copy(), self.labels.copy(), self.weights.copy(), self.params.copy(),
            self.sizes.copy(), float(self.surplus), self.pool.copy(), float(self.kanter_z),
        )

    def validate(self) -> None:
        """Raise :class:`PreconditionError` unless every state invariant holds."""
        K = self.n_clusters
        if not (self.params.shape[0] == K and self.sizes.shape[0] == K):
            raise PreconditionError("cluster arrays have inconsistent lengths")
        if self.labels.shape[0] != self.n:
            raise PreconditionError("labels and data have different lengths")
        if self.n and (self.labels.min() < 0 or self.labels.max() >= K):
            raise PreconditionError("labels reference a missing cluster")
        if not np.array_equal(np.bincount(self.labels, minlength=K), self.sizes):
            raise PreconditionError("cluster sizes do not match the labels")
        if np.any(self.sizes <= 0):
            raise PreconditionError("empty cluster in the state")
        if not (np.all(self.weights > 0) and np.all(np.isfinite(self.weights))):
            raise PreconditionError("size-biased weights must be positive and finite")
        if not (self.surplus > 0 and math.isfinite(self.surplus)):
            raise PreconditionError("surplus mass must be positive and finite")
        if self.pool.shape[0] < 1:
            raise PreconditionError("the parameter pool needs at least one slot")
        if not 0 < self.kanter_z < 1:
            raise PreconditionError("Kanter auxiliary must lie in (0, 1)")

    @classmethod
    def from_partition(cls, data, labels, weights, params, surplus, pool, kanter_z=0.5):
        labels = np.asarray(labels, dtype=np.int64)
        weights = np.asarray(weights, dtype=float)
        state = cls(
            np.asarray(data, dtype=float), labels, weights, np.asarray(params, dtype=float),
            np.bincount(labels, minlength=weights.shape[0]).astype(np.int64),
            float(surplus), np.asarray(pool, dtype=float), float(kanter_z),
        )
        state.validate()
        return state


def initial_state(data, prior, lik, rng, n_pool: int = 3) -> SeatingState:
    """All observations in one cluster; ``T`` from its prior law, ``J_1`` size-biased."""
    data = np.asarray(data, dtype=float)
    total = prior.sample_total_mass(rng)
    w1 = prior.sample_new_weight(total, rng)
    mean, var = lik.posterior(data.shape[0], float(data.sum()))
    param = rng.normal(mean, math.sqrt(var)) if var > 0 else mean
    return SeatingState.from_partition(
        data, np.zeros(data.shape[0], dtype=np.int64), [w1], [param], total - w1,
        np.atleast_1d(lik.sample_base(rng, n_pool)).astype(float),
    )


# ---------------------------------------------------------------------- log-targets


def _data_terms(state, lik) -> float:
    if isinstance(lik, FlatLikelihood):
        return 0.0
    out = float(np.sum(lik.log_base(state.params)))
    out += float(np.sum(lik.log_lik(state.data, state.params[state.labels])))
    return out


def log_joint(state: SeatingState, prior, lik) -> float:
    """Log of the varying-table-size joint over partition, weights, surplus and data."""
    state.validate()
    s = state.weights
    t = state.surplus + s.sum()
    out = -state.n * math.log(t) + float(prior.log_h(t)) + float(prior.log_f(state.surplus))
    out += float(np.sum(state.sizes * np.log(s) + prior.log_levy(s)))
    return out + _data_terms(state, lik)


def log_cond_surplus(v, state: SeatingState, prior) -> float:
    """``-n log(v + S) + log f_rho(v) + log h(v + S)``; ``-inf`` for ``v <= 0``."""
    if not v > 0:
        return -math.inf
    t = v + float(state.weights.sum())
    return -state.n * math.log(t) + float(prior.log_f(v)) + float(prior.log_h(t))


def log_cond_z(z, v, prior) -> float:
    """Kanter auxiliary conditional ``log A(z) - v^(-s/(1-s)) A(z)``."""
    if not (0 < z < 1 and v > 0):
        return -math.inf
    la = sm.log_A_scalar(z, prior.sigma)
    return la - v ** -prior.params.tail_exponent * math.exp(la)


def log_cond_surplus_aux(v, z, state: SeatingState, prior) -> float:
    """Joint log-density of ``(V, Z)`` given the rest under Kanter's augmentation.

    Integrating ``exp`` of this over ``z`` gives ``exp(log_cond_surplus)``
    exactly, since the Kanter prefactor ``sigma/(1-sigma) v^(-1/(1-sigma))``
    is kept.
    """
    if not (v > 0 and 0 < z < 1):
        return -math.inf
    sigma = prior.sigma
    t = v + float(state.weights.sum())
    return (
        -state.n * math.log(t)
        + float(prior.log_h(t))
        + math.log(sigma / (1 - sigma))
        - math.log(v) / (1 - sigma)
        + log_cond_z(z, v, prior)
    )


def surplus_bound(i: int, state: SeatingState) -> float:
    """Mass available to the ``i``-th cluster: ``V + sum_{j >= i} J_j``."""
    return float(state.surplus + state.weights[i:].sum())


def log_cond_weight(s, i: int, state: SeatingState, prior) -> float:
    """``-n log(v + s + R) + log h(v + s + R) + |c_i| log s + log rho(s)``.

    ``R`` is the sum of the other weights.  With ``V`` held fixed the total
    grows with ``s``, so the only support constraint is ``s > 0``.
    """
    if not 0 <= i < state.n_clusters:
        raise PreconditionError(f"no occupied cluster with index {i}")
    if not s > 0:
        return -math.inf
    rest = float(state.weights.sum() - state.weights[i])
    t = state.surplus + s + rest
    return (
        -state.n * math.log(t)
        + float(prior.log_h(t))
        + state.sizes[i] * math.log(s)
        + float(prior.log_levy(s))
    )


def log_predictive_weights(x, state: SeatingState, lik, n_pool: int | None = None) -> np.ndarray:
    """Scores for seating ``x``: ``log(s_c F(x|y_c))`` then ``log(v/M F(x|y_j))``.

    The observation must already be removed from the state.
    """
    pool = state.pool if n_pool is None else state.pool[:n_pool]
    M = pool.shape[0]
    with np.errstate(divide="ignore"):
        old = np.log(state.weights) + lik.log_lik(x, state.params)
        new = math.log(state.surplus / M) + lik.log_lik(x, pool) if state.surplus > 0 else \
            np.full(M, -np.inf)
    return np.concatenate([np.atleast_1d(old), np.atleast_1d(new)])


def update_cluster_params(state: SeatingState, lik, rng) -> SeatingState:
    """Redraw every cluster mean from its conjugate Normal full conditional."""
    if isinstance(lik, FlatLikelihood) or state.n_clusters == 0:
        return state
    sums = np.bincount(state.labels, weights=state.data, minlength=state.n_clusters)
    mean, var = lik.posterior(state.sizes, sums)
    state.params = rng.normal(mean, np.sqrt(var))
    return state
