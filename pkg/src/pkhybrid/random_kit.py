"""Nonuniform random variate generation.

Every sampler takes a :class:`numpy.random.Generator` and is deterministic
given its state.  ``size=None`` returns a float, otherwise an array.
"""
from __future__ import annotations

import math

import numpy as np

from .exceptions import CapabilityError, DomainError, EvaluationError, SamplingError
from .stable_math import SigmaStableParams, _log_A, _sigma_of

MAX_REJECTION_ROUNDS = 10**6
# lam ** sigma at or below which plain rejection from the untilted law is used
NAIVE_TILT_LIMIT = 2.0


def as_generator(seed=None) -> np.random.Generator:
    """Accept ``None``, an int, a SeedSequence or a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_streams(seed, n: int) -> list[np.random.Generator]:
    """``n`` independent generators derived from one seed, stable under reordering."""
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in seq.spawn(n)]


def _shape(size):
    return 1 if size is None else size


def _ret(arr, size):
    return float(arr.ravel()[0]) if size is None else arr


def sample_gamma(shape: float, rate: float, rng, size=None):
    if not (shape > 0 and rate > 0):
        raise DomainError("gamma shape and rate must be positive")
    return _ret(np.asarray(rng.gamma(shape, 1.0 / rate, _shape(size))), size)


def sample_inverse_gamma(shape: float, scale: float, rng, size=None):
    """Reciprocal of a Gamma(shape, rate=scale) variate."""
    if not (shape > 0 and scale > 0):
        raise DomainError("inverse-gamma shape and scale must be positive")
    return _ret(scale / np.asarray(rng.gamma(shape, 1.0, _shape(size))), size)


def _stable_draws(sigma, rng, n):
    # Kanter: (A(U) / E) ** ((1 - sigma) / sigma) with U ~ U(0, 1), E ~ Exp(1)
    u = rng.random(n)
    u = np.where(u == 0.0, 0.5, u)
    e = rng.standard_exponential(n)
    log_a = _log_A(u, 1.0 - u, sigma)
    return np.exp((log_a - np.log(e)) * (1 - sigma) / sigma)


def sample_positive_stable(p, rng, size=None):
    """Positive sigma-stable draw with Laplace transform ``exp(-lam ** sigma)``."""
    sigma = _sigma_of(p)
    n = int(np.prod(_shape(size)))
    return _ret(_stable_draws(sigma, rng, n).reshape(_shape(size)), size)


def _naive_tilted(sigma, lam, rng, n, max_rounds):
    out = np.empty(n)
    pending = np.arange(n)
    accept = math.exp(-(lam ** sigma))
    for _ in range(max_rounds):
        k = pending.size
        batch = min(max(k, int(math.ceil(1.2 * k / accept))), 1 << 20)
        s = _stable_draws(sigma, rng, batch)
        ok = np.flatnonzero(rng.random(batch) < np.exp(-lam * s))
        take = min(ok.size, k)
        out[pending[:take]] = s[ok[:take]]
        pending = pending[take:]
        if pending.size == 0:
            return out
    raise SamplingError("tilted stable rejection exceeded its iteration cap")


def _log_B(u, alpha):
    # log of sinc(u) / (sinc(alpha u)^alpha * sinc((1 - alpha) u)^(1 - alpha)), sinc(x) = sin(x)/x
    x = u / math.pi
    return (
        np.log(np.sinc(x))
        - alpha * np.log(np.sinc(alpha * x))
        - (1 - alpha) * np.log(np.sinc((1 - alpha) * x))
    )


def _double_rejection(alpha, lam, rng, n, max_rounds):
    """Devroye's double-rejection sampler for exp(-lam t) f_alpha(t), vectorized.

    Draws an angle ``U`` from a dominating mixture (inner rejection), then an
    auxiliary ``X`` given ``U`` (outer rejection); the variate is ``X ** -b``.
    """
    b = (1 - alpha) / alpha
    lam_a = lam**alpha
    gam = lam_a * alpha * (1 - alpha)
    sg = math.sqrt(gam)
    c1 = math.sqrt(math.pi / 2)
    c3 = (2 + c1) * sg
    xi = (1 + math.sqrt(2) * c3) / math.pi
    psi = c3 * math.exp(-gam * math.pi**2 / 8) / math.sqrt(math.pi)
    w1, w2, w3 = c1 * xi / sg, 2 * math.sqrt(math.pi) * psi, xi * math.pi

    def angles(k):
        u_out = np.empty(k)
        unif_out = np.empty(k)
        z_out = np.empty(k)
        need = np.arange(k)
        for _ in range(max_rounds):
            m = need.size
            v = rng.random(m)
            w = rng.random(m)
            if gam >= 1:
                u = np.where(v < w1 / (w1 + w2),
                             np.abs(rng.standard_normal(m)) / sg, math.pi * (1 - w * w))
            else:
                u = np.where(v < w3 / (w2 + w3), math.pi * w, math.pi * (1 - w * w))
            inside = (u > 0) & (u < math.pi)
            u = np.where(inside, u, 0.5 * math.pi)
            zeta = np.exp(0.5 * _log_B(u, alpha))
            z = 1.0 / (1.0 - (1.0 + alpha * zeta / sg) ** (-1.0 / alpha))
            d = psi / np.sqrt(math.pi - u)
            d = d + (xi * np.exp(-gam * u * u / 2) if gam >= 1 else xi)
            with np.errstate(over="ignore", invalid="ignore"):
                rho = math.pi * np.exp(-lam_a * (1 - zeta**-2)) * d / ((1 + c1) * sg / zeta + z)
            rho = np.where(np.isnan(rho), np.inf, rho)
            scaled = rng.random(m) * rho
            ok = inside & (scaled <= 1)
            idx = need[ok]
            u_out[idx], unif_out[idx], z_out[idx] = u[ok], scaled[ok], z[ok]
            need = need[~ok]
            if need.size == 0:
                return u_out, unif_out, z_out
        raise SamplingError("double rejection: angle sampler exceeded its iteration cap")

    out = np.empty(n)
    pending = np.arange(n)
    for _ in range(max_rounds):
        k = pending.size
        u, unif, z = angles(k)
        a = np.exp(_log_A(u / math.pi, 1 - u / math.pi, alpha))
        m = (b / a) ** alpha * lam_a
        delta = np.sqrt(m * alpha / a)
        a1, a2, a3 = delta * c1, delta, z / a
        tot = a1 + a2 + a3
        v = rng.random(k)
        nrm = rng.standard_normal(k)
        ext = rng.standard_exponential(k)
        flat = rng.random(k)
        left = v < a1 / tot
        mid = ~left & (v < (a1 + a2) / tot)
        right = ~left & ~mid
        x = np.where(left, m - delta * np.abs(nrm), np.where(mid, m + delta * flat, m + delta + ext * a3))
        pos = x > 0
        xs = np.where(pos, x, 1.0)
        log_acc = -(a * (xs - m) + lam * m**-b * ((m / xs) ** b - 1))
        log_acc = log_acc + np.where(left, 0.5 * nrm * nrm, 0.0) + np.where(right, ext, 0.0)
        ok = pos & (log_acc > np.log(unif))
        out[pending[ok]] = xs[ok] ** -b
        pending = pending[~ok]
        if pending.size == 0:
            return out
    raise SamplingError("double rejection exceeded its iteration cap")


def sample_tilted_stable(p, lam: float, rng, size=None, method: str | None = None,
                         max_rounds: int = MAX_REJECTION_ROUNDS):
    """Draw from the density proportional to ``exp(-lam t) f_sigma(t)``.

    ``method`` is ``"naive"`` (propose untilted, accept with ``exp(-lam t)``)
    or ``"double"`` (double rejection); by default naive is used while
    ``lam ** sigma <= 2``.
    """
    sigma = _sigma_of(p)
    if not lam >= 0:
        raise DomainError(f"tilt must be non-negative, got {lam!r}")
    n = int(np.prod(_shape(size)))
    if lam == 0:
        draws = _stable_draws(sigma, rng, n)
    else:
        if method is None:
            method = "naive" if lam**sigma <= NAIVE_TILT_LIMIT else "double"
        if method == "naive":
            draws = _naive_tilted(sigma, lam, rng, n, max_rounds)
        elif method == "double":
            draws = _double_rejection(sigma, lam, rng, n, max_rounds)
        else:
            raise ValueError(f"unknown method {method!r}")
    return _ret(draws.reshape(_shape(size)), size)


def sample_new_weight_exact(surplus: float, p, rng, size=None):
    """Exact i.i.d. new size-biased weight for ``sigma = 1/2``.

    ``G ~ Gamma(3/4, 1)``, ``IG ~ InvGamma(1/4, surplus**-2 / 64)`` and the
    weight is ``surplus * sqrt(G) / (sqrt(G) + sqrt(IG))``.
    """
    sigma = _sigma_of(p)
    if sigma != 0.5:
        raise CapabilityError(
            "exact new-weight sampling is implemented for sigma = 1/2 only; "
            "use sample_new_weight_generic"
        )
    if not surplus > 0:
        raise DomainError("surplus must be positive")
    n = _shape(size)
    g = np.asarray(rng.gamma(0.75, 1.0, n))
    ig = (1.0 / (64.0 * surplus * surplus)) / np.asarray(rng.gamma(0.25, 1.0, n))
    rg, ri = np.sqrt(g), np.sqrt(ig)
    # stick in (0, 1); computed as 1 / (1 + r) to stay off the endpoints
    stick = 1.0 / (1.0 + ri / rg)
    w = stick * surplus
    return _ret(np.clip(w, np.nextafter(0.0, 1.0), np.nextafter(surplus, 0.0)), size)


def _cell_masses(logd, nodes, top):
    """Integrals of the log-linear interpolant of ``exp(logd - top)`` over each cell."""
    l0, l1 = logd[:-1], logd[1:]
    h = np.diff(nodes)
    with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
        e0, e1 = np.exp(l0 - top), np.exp(l1 - top)
        g = l1 - l0
        mass = np.where(np.abs(g) < 1e-8, h * 0.5 * (e0 + e1), h * (e1 - e0) / g)
    return np.where(np.isfinite(mass) & (mass > 0), mass, 0.0)


def _inverse_cdf_draw(logd, nodes, u, mass=None):
    """Invert the CDF of the piecewise log-linear density through ``(nodes, logd)``.

    Within a cell the density is ``exp(l0 + g x / h)``, whose CDF inverts in
    closed form, so the draw is exact for the interpolant.
    """
    if mass is None:
        mass = _cell_masses(logd, nodes, np.max(logd))
    h = np.diff(nodes)
    g = np.diff(logd)
    cum = np.cumsum(mass)
    total = cum[-1]
    if not (total > 0 and np.isfinite(total)):
        raise SamplingError("new-weight density could not be normalized on the grid")
    target = u * total
    cell = np.minimum(np.searchsorted(cum, target, side="right"), len(mass) - 1)
    before = np.where(cell > 0, cum[cell - 1], 0.0)
    r = np.clip((target - before) / np.where(mass[cell] > 0, mass[cell], 1.0), 0.0, 1.0)
    gc, hc = g[cell] / h[cell], h[cell]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        frac = np.where(
            np.abs(g[cell]) < 1e-8,
            r * hc,
            np.log1p(r * np.expm1(gc * hc)) / gc,
        )
    frac = np.where(np.isfinite(frac), frac, r * hc)
    return nodes[cell] + np.clip(frac, 0.0, hc)


def sample_new_weight_generic(surplus: float, prior, rng, size=None, grid: int = 512):
    """New size-biased weight from ``f_rho(v - s) rho(s) s`` on ``(0, v)`` by inverse CDF.

    ``prior.new_weight_pieces(v, grid)`` splits ``(0, v)`` into pieces, each
    given as ``(nodes, logd, to_s)``: grid nodes in a coordinate adapted to the
    local shape, the log-density there (w.r.t. that coordinate, on a common
    scale across pieces) and the map back to ``s``.  A piece is chosen by its
    mass, then the log-linear interpolant is inverted exactly.
    """
    if not surplus > 0:
        raise DomainError("surplus must be positive")
    pieces = prior.new_weight_pieces(surplus, grid)
    top = -np.inf
    for _, logd, _ in pieces:
        if np.any(np.isnan(logd)):
            raise EvaluationError("new-weight density is NaN on the grid")
        top = max(top, np.max(logd))
    if not np.isfinite(top):
        raise EvaluationError("new-weight density vanishes on the grid")
    masses = [_cell_masses(logd, nodes, top) for nodes, logd, _ in pieces]
    totals = np.array([m.sum() for m in masses])
    n = int(np.prod(_shape(size)))
    which = np.searchsorted(np.cumsum(totals), rng.random(n) * totals.sum(), side="right")
    which = np.minimum(which, len(pieces) - 1)
    s = np.empty(n)
    for j, (nodes, logd, to_s) in enumerate(pieces):
        idx = np.flatnonzero(which == j)
        if idx.size:
            x = _inverse_cdf_draw(logd, nodes, rng.random(idx.size), masses[j])
            s[idx] = to_s(x)
    s = np.clip(s, np.nextafter(0.0, 1.0), np.nextafter(surplus, 0.0))
    return _ret(s.reshape(_shape(size)), size)


def logbeta_new_weight_target(s, surplus: float, b: float):
    """Unnormalized new-weight density of the -logBeta class on ``(0, surplus)``.

    ``(1 - e^(s - v))^(b - 1) (1 - e^(-b s)) / (1 - e^(-s))``, bounded by ``b``.
    """
    s = np.asarray(s, dtype=float)
    ratio = np.expm1(-b * s) / np.expm1(-s)
    if b == 1:
        return ratio
    return (-np.expm1(s - surplus)) ** (b - 1) * ratio


def logbeta_uses_power_proposal(surplus: float, b: float) -> bool:
    """Choose the proposal with the larger acceptance bound.

    The uniform proposal accepts at rate about ``mean (1 - e^-u)^(b-1)`` over
    ``u`` in ``(0, v)``, which vanishes like ``v^(b-1)`` for small surplus; the
    power proposal ``v - s ~ v Beta(b, 1)`` accepts at rate about
    ``((1 - e^-v) / v)^(b-1)``, which tends to one there.
    """
    if b == 1:
        return False
    u = surplus * (np.arange(16) + 0.5) / 16
    acc_uniform = float(np.mean((-np.expm1(-u)) ** (b - 1)))
    acc_power = (-math.expm1(-surplus) / surplus) ** (b - 1)
    return acc_power > acc_uniform


def sample_new_weight_logbeta(surplus: float, p, rng, max_rounds: int = MAX_REJECTION_ROUNDS,
                              return_trials: bool = False):
    """Rejection sampler for the -logBeta new weight.

    Large surplus: propose ``U(0, v)`` and accept with probability
    ``target / b``.  Small surplus: propose ``v - s = v U^(1/b)`` and accept
    with probability ``r(s)/b * ((1 - e^-(v-s)) / (v-s))^(b-1)`` where
    ``r(s) = (1 - e^(-b s)) / (1 - e^(-s))``.  With ``return_trials=True``
    the number of proposals is returned as well.
    """
    if not surplus > 0:
        raise DomainError("surplus must be positive")
    b = p.b
    power = logbeta_uses_power_proposal(surplus, b)
    trials = 0
    batch = 8
    for _ in range(max_rounds):
        if power:
            s = surplus * -np.expm1(np.log(rng.random(batch)) / b)
            rest = surplus - s
            with np.errstate(divide="ignore", invalid="ignore"):
                acc = (np.expm1(-b * s) / np.expm1(-s) / b) * (-np.expm1(-rest) / rest) ** (b - 1)
        else:
            s = surplus * rng.random(batch)
            with np.errstate(divide="ignore", invalid="ignore"):
                acc = logbeta_new_weight_target(s, surplus, b) / b
        u = rng.random(batch)
        valid = (s > 0) & (s < surplus)
        ok = np.flatnonzero(valid & (u < acc))
        if ok.size:
            trials += int(ok[0]) + 1
            draw = float(s[ok[0]])
            return (draw, trials) if return_trials else draw
        trials += batch
        batch = min(2 * batch, 4096)
    raise SamplingError("-logBeta new-weight rejection exceeded its iteration cap")


__all__ = [
    "SigmaStableParams",
    "as_generator",
    "spawn_streams",
    "sample_gamma",
    "sample_inverse_gamma",
    "sample_positive_stable",
    "sample_tilted_stable",
    "sample_new_weight_exact",
    "sample_new_weight_generic",
    "sample_new_weight_logbeta",
    "logbeta_new_weight_target",
    "logbeta_uses_power_proposal",
]
