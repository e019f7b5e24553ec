"""ESS, the Pitman-Yor EPPF oracle, forward simulation and the Geweke harness."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import PreconditionError
from .model import FlatLikelihood, SeatingState
from .sampler import HybridSampler, SweepSettings, TraceRecord


# ---------------------------------------------------------------------------- ESS


@dataclass(frozen=True)
class EssReport:
    name: str
    n: int
    ess: float
    cutoff_lag: int
    degenerate: bool = False


def _autocorr(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acov / acov[0]


def ess(series, name: str = "x") -> EssReport:
    """Effective sample size with Geyer's initial monotone positive sequence.

    Sums of adjacent autocorrelation pairs are truncated at the first
    non-positive pair and forced to be non-increasing; the estimate is capped
    at the series length.
    """
    x = np.asarray(series, dtype=float).ravel()
    n = x.shape[0]
    if n < 100:
        raise PreconditionError("ESS needs a series of length >= 100")
    if not np.all(np.isfinite(x)):
        raise PreconditionError("series contains non-finite values")
    if np.ptp(x) == 0 or np.var(x) <= 1e-300:
        return EssReport(name, n, 1.0, 0, True)
    rho = _autocorr(x)
    m = (n - 1) // 2
    pairs = rho[0 : 2 * m : 2] + rho[1 : 2 * m + 1 : 2]
    bad = np.flatnonzero(pairs <= 0)
    stop = int(bad[0]) if bad.size else pairs.shape[0]
    gam = np.minimum.accumulate(pairs[:stop]) if stop else np.zeros(0)
    tau = -1.0 + 2.0 * float(gam.sum()) if stop else 1.0
    tau = max(tau, 1.0 / n)
    return EssReport(name, n, float(min(n / tau, n)), 2 * stop + 1)


# --------------------------------------------------------------------------- EPPF


def py_eppf(sizes, theta: float, sigma: float) -> float:
    """Pitman-Yor probability of one partition with the given block sizes."""
    sizes = [int(s) for s in sizes]
    if not sizes or any(s <= 0 for s in sizes):
        raise PreconditionError("block sizes must be positive integers")
    if not (0 <= sigma < 1 and theta > -sigma):
        raise PreconditionError("need 0 <= sigma < 1 and theta > -sigma")
    n, k = sum(sizes), len(sizes)
    log_p = sum(math.log(theta + i * sigma) for i in range(1, k))
    log_p -= sum(math.log(theta + i) for i in range(1, n))
    for s in sizes:
        log_p += sum(math.log(j - sigma) for j in range(1, s))
    return math.exp(log_p)


def set_partitions(n: int):
    """All set partitions of ``range(n)`` as canonical label tuples."""
    out = []

    def grow(prefix, k):
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for c in range(k + 1):
            grow(prefix + [c], max(k, c + 1))

    grow([], 0)
    return out


def canonical_labels(labels) -> tuple:
    """Relabel clusters by order of first appearance."""
    seen: dict = {}
    return tuple(seen.setdefault(int(c), len(seen)) for c in labels)


# ---------------------------------------------------------------- forward sampling


@dataclass
class ForwardDraw:
    labels: np.ndarray
    weights: np.ndarray
    surplus: float
    total: float
    params: np.ndarray = field(default_factory=lambda: np.zeros(0))


def forward_generate(prior, n: int, rng, lik=None) -> ForwardDraw:
    """Sequential generative process: ``T``, then size-biased discovery of atoms.

    Observation ``i`` joins occupied atom ``k`` with probability ``J_k / T``
    or a new atom with probability ``V / T``, whose mass is drawn from the
    new-weight kernel given the current surplus ``V``.
    """
    if n < 0:
        raise PreconditionError("n must be non-negative")
    total = float(prior.sample_total_mass(rng))
    v = total
    weights: list[float] = []
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        u = rng.random() * total
        acc, pick = 0.0, len(weights)
        for k, w in enumerate(weights):
            acc += w
            if u < acc:
                pick = k
                break
        if pick == len(weights):
            s = float(prior.sample_new_weight(v, rng))
            v -= s
            weights.append(s)
        labels[i] = pick
    params = np.zeros(0)
    if lik is not None:
        params = np.atleast_1d(lik.sample_base(rng, len(weights))).astype(float)
    return ForwardDraw(labels, np.asarray(weights, dtype=float), v, total, params)


# -------------------------------------------------------------------------- Geweke


GEWEKE_STATS = ("K", "log_T", "log_V", "V_frac", "mean_weight_frac", "mean_x", "mean_x2")


def geweke_statistics(state: SeatingState) -> dict:
    t = state.total_mass
    out = {"log_T": math.log(t), "log_V": math.log(state.surplus), "V_frac": state.surplus / t}
    if state.n:
        out["K"] = float(state.n_clusters)
        out["mean_weight_frac"] = float(np.mean(state.weights)) / t
        out["mean_x"] = float(np.mean(state.data))
        out["mean_x2"] = float(np.mean(state.data ** 2))
    return out


@dataclass
class GewekeReport:
    z: dict
    marginal_mean: dict
    successive_mean: dict
    successive_ess: dict
    threshold: float

    @property
    def max_abs_z(self) -> float:
        return max(abs(v) for v in self.z.values())

    @property
    def passed(self) -> bool:
        return self.max_abs_z < self.threshold

    def table(self) -> str:
        lines = [f"{'statistic':<18}{'marginal':>12}{'successive':>12}{'ess':>10}{'z':>8}"]
        for k, z in self.z.items():
            lines.append(
                f"{k:<18}{self.marginal_mean[k]:>12.5g}{self.successive_mean[k]:>12.5g}"
                f"{self.successive_ess[k]:>10.0f}{z:>8.2f}"
            )
        lines.append(f"max |z| = {self.max_abs_z:.2f} (threshold {self.threshold}) -> "
                     + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def _marginal_state(prior, lik, n_obs, rng, n_pool) -> SeatingState:
    draw = forward_generate(prior, n_obs, rng, lik)
    data = lik.sample_data(draw.params[draw.labels], rng) if n_obs else np.zeros(0)
    return SeatingState(
        np.asarray(data, dtype=float), draw.labels, draw.weights, draw.params,
        np.bincount(draw.labels, minlength=draw.weights.shape[0]).astype(np.int64),
        draw.surplus, np.atleast_1d(lik.sample_base(rng, n_pool)).astype(float), 0.5,
    )


def geweke_test(prior, lik, n_obs: int, sweeps: int, rng, variant=None,
                settings: SweepSettings | None = None, n_marginal: int | None = None,
                burn_in: int = 1000, threshold: float = 4.0, sweep=None) -> GewekeReport:
    """Marginal-conditional vs successive-conditional comparison of the joint.

    ``sweep(state, rng) -> state`` replaces the full sampler sweep, which lets
    tests inject faults.  Standard errors use the ESS of each series.
    """
    if lik is None or isinstance(lik, FlatLikelihood):
        raise PreconditionError("the Geweke test needs a data-generating likelihood")
    settings = settings or SweepSettings()
    sampler = HybridSampler(prior, lik, variant, settings)
    if sweep is None:
        def sweep(state, rng):
            return sampler.sweep(state, rng, log_joint=False)[0]

    n_marginal = sweeps if n_marginal is None else n_marginal
    marg = [geweke_statistics(_marginal_state(prior, lik, n_obs, rng, settings.n_pool))
            for _ in range(n_marginal)]

    state = _marginal_state(prior, lik, n_obs, rng, settings.n_pool)
    succ = []
    for it in range(burn_in + sweeps):
        state = sweep(state, rng)
        if n_obs:
            state.data = np.asarray(lik.sample_data(state.params[state.labels], rng), dtype=float)
        if it >= burn_in:
            succ.append(geweke_statistics(state))

    z, mm, sm_, se = {}, {}, {}, {}
    for key in marg[0]:
        a = np.array([r[key] for r in marg])
        b = np.array([r[key] for r in succ])
        ea, eb = ess(a).ess, ess(b).ess
        var = np.var(a, ddof=1) / ea + np.var(b, ddof=1) / eb
        mm[key], sm_[key], se[key] = float(a.mean()), float(b.mean()), eb
        z[key] = float((a.mean() - b.mean()) / math.sqrt(var)) if var > 0 else 0.0
    return GewekeReport(z, mm, sm_, se, threshold)


# ------------------------------------------------------------------------ summaries


def summarize_chain(records: list[TraceRecord]) -> dict:
    """Mean K, ESS of K and T, MH acceptance rate and wall time of one chain."""
    K = np.array([r.K for r in records], dtype=float)
    T = np.array([r.total for r in records], dtype=float)
    acc = np.array([r.accept_mh for r in records], dtype=float)
    return {
        "mean_K": float(K.mean()),
        "ess_K": ess(K, "K").ess,
        "ess_T": ess(T, "T").ess,
        "accept_mh": float(np.nanmean(acc)) if np.any(np.isfinite(acc)) else math.nan,
        "seconds": float(sum(r.seconds for r in records)),
    }
