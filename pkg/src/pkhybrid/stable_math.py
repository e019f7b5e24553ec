"""Log-space densities for the sigma-stable and -logBeta Poisson-Kingman classes.

All functions accept scalars or arrays and return a float for scalar input.
The positive sigma-stable law used throughout has Laplace transform
``E[exp(-lam * T)] = exp(-lam ** sigma)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicSpline

from .exceptions import DomainError, EvaluationError

SIGMA_MIN = 0.05
SIGMA_MAX = 0.95

# Series results losing more than this factor to cancellation are discarded.
_MAX_CANCELLATION = 1e8
# Target for the estimated rounding error of an accepted series value.
_SERIES_REL_ERR = 1e-10


@dataclass(frozen=True)
class SigmaStableParams:
    """Index ``sigma`` of a positive stable law, optionally as a ratio ``u/v``."""

    sigma: float
    rational: tuple[int, int] | None = None

    def __post_init__(self):
        sigma = float(self.sigma)
        if not SIGMA_MIN < sigma < SIGMA_MAX:
            raise DomainError(
                f"sigma must lie in ({SIGMA_MIN}, {SIGMA_MAX}), got {self.sigma!r}"
            )
        object.__setattr__(self, "sigma", sigma)
        if self.rational is not None:
            u, v = (int(x) for x in self.rational)
            if not (0 < u < v) or math.gcd(u, v) != 1 or u / v != sigma:
                raise DomainError(
                    f"rational form {self.rational!r} must be coprime u < v with u/v == sigma"
                )
            object.__setattr__(self, "rational", (u, v))

    @classmethod
    def from_ratio(cls, u: int, v: int) -> "SigmaStableParams":
        return cls(u / v, (u, v))

    @property
    def tail_exponent(self) -> float:
        """``sigma / (1 - sigma)``, the power of ``t`` in the Kanter exponent."""
        return self.sigma / (1.0 - self.sigma)


@dataclass(frozen=True)
class LogBetaParams:
    """Parameters of the -logBeta(a, b) class; ``b = 1`` is the Gamma process."""

    a: float
    b: float

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError(f"a must be positive, got {self.a!r}")
        if not self.b >= 1:
            raise DomainError(f"b must be >= 1, got {self.b!r}")


@dataclass(frozen=True)
class PitmanYor:
    """Polynomial tilt ``h(t) = t ** -theta``."""

    theta: float

    def log_h(self, t, sigma=None):
        if sigma is not None and not self.theta > -sigma:
            raise DomainError(f"Pitman-Yor requires theta > -sigma, got theta={self.theta}")
        return -self.theta * np.log(t)


@dataclass(frozen=True)
class NormalizedStable:
    """Untilted case ``h = 1``: the normalized stable process."""

    def log_h(self, t, sigma=None):
        return np.zeros_like(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class NGG:
    """Exponential tilt ``h(t) = exp(-tau ** (1 / sigma) * t)``.

    With this convention the total mass is exponentially tilted stable with
    rate ``tau ** (1 / sigma)``, so ``tau = 1`` means a unit tilt.
    """

    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise DomainError(f"NGG requires tau > 0, got {self.tau!r}")

    def rate(self, sigma: float) -> float:
        return self.tau ** (1.0 / sigma)

    def log_h(self, t, sigma=None):
        if sigma is None:
            raise DomainError("NGG tilt needs sigma to convert tau into a rate")
        return -self.rate(sigma) * np.asarray(t, dtype=float)


@dataclass(frozen=True)
class UnitTilt:
    """``h = 1`` for the -logBeta class."""

    def log_h(self, t, sigma=None):
        return np.zeros_like(np.asarray(t, dtype=float))


TiltFunction = PitmanYor | NormalizedStable | NGG | UnitTilt


def _sigma_of(p) -> float:
    return p.sigma if isinstance(p, SigmaStableParams) else SigmaStableParams(p).sigma


def _positive(x, name="t"):
    arr = np.asarray(x, dtype=float)
    if not np.all(arr > 0):
        raise DomainError(f"{name} must be strictly positive")
    return arr


def _out(arr, like):
    return np.asarray(arr).item() if np.ndim(like) == 0 else arr


def _log_A(z, zc, sigma):
    """``log A(z)`` given ``z`` and its complement ``zc = 1 - z`` (both exact)."""
    s = sigma
    # sin(pi z) via the nearer endpoint keeps relative accuracy on both sides.
    sinc_z = np.where(z <= 0.5, np.sinc(z), np.sin(np.pi * zc) / (np.pi * np.maximum(z, 1e-300)))
    return (
        s * np.log(s * np.sinc(s * z))
        + (1 - s) * np.log((1 - s) * np.sinc((1 - s) * z))
        - np.log(sinc_z)
    ) / (1 - s)


def log_A_scalar(z: float, sigma: float) -> float:
    """Scalar ``log A(z)`` for ``0 < z < 1`` using the math module only."""
    s = sigma
    pz = math.pi * z
    sin_z = math.sin(math.pi * (1.0 - z)) if z > 0.5 else math.sin(pz)
    return (
        s * math.log(math.sin(s * pz))
        + (1 - s) * math.log(math.sin((1 - s) * pz))
        - math.log(sin_z)
    ) / (1 - s)


def log_A_at_zero(sigma: float) -> float:
    """``log A(0+) = log((1 - sigma) * sigma ** (sigma / (1 - sigma)))``."""
    return math.log1p(-sigma) + sigma / (1 - sigma) * math.log(sigma)


def zolotarev_A(z, p):
    """Kanter's function ``A(z)`` on ``(0, 1)``.

    ``A(z) = sin(s pi z)^(s/(1-s)) sin((1-s) pi z) / sin(pi z)^(1/(1-s))``,
    evaluated through normalized sincs so that the ``z -> 0`` limit is exact.
    """
    sigma = _sigma_of(p)
    z_arr = np.asarray(z, dtype=float)
    if not np.all((z_arr > 0) & (z_arr < 1)):
        raise DomainError("z must lie in (0, 1)")
    return _out(np.exp(_log_A(z_arr, 1.0 - z_arr, sigma)), z)


def _series_log_f(t, sigma, tol, max_terms):
    """Alternating series for ``log f_sigma``; returns values and a success mask."""
    logt = np.log(t)
    out = np.full(t.shape, np.nan)
    ok = np.zeros(t.shape, dtype=bool)
    # location of the largest term in j
    peak = np.exp((sigma * math.log(sigma) - sigma * logt) / (1 - sigma))
    need = np.ceil(3 * peak + 40)
    todo = need <= max_terms
    if not todo.any():
        return out, ok
    J = int(need[todo].max())
    j = np.arange(1, J + 1, dtype=float)
    sin_term = np.sin(np.pi * np.mod(sigma * j, 2.0))
    sin_term[np.abs(sin_term) < 1e-13] = 0.0
    with np.errstate(divide="ignore"):
        base = (
            np.log(np.abs(sin_term))
            + special.gammaln(sigma * j + 1)
            - special.gammaln(j + 1)
            - math.log(math.pi)
        )
    sign = np.where(j % 2 == 1, 1.0, -1.0) * np.sign(sin_term)
    lt = logt[todo]
    logmag = base[None, :] - np.outer(lt, sigma * j + 1)
    top = logmag.max(axis=1)
    mags = np.exp(logmag - top[:, None])
    total = np.sum(sign * mags, axis=1)
    # each term carries a relative error of about eps * |log magnitude|
    weight = np.where(mags > 0, np.abs(np.where(mags > 0, logmag, 0.0)) + 1, 0.0)
    rounding = np.finfo(float).eps * np.sum(mags * weight, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_abs = np.log(np.abs(total)) + top
        converged = logmag[:, -1] - log_abs < math.log(tol)
        accurate = rounding < _SERIES_REL_ERR * total
    good = (total > 1.0 / _MAX_CANCELLATION) & converged & accurate
    idx = np.flatnonzero(todo)
    out[idx[good]] = log_abs[good]
    ok[idx[good]] = True
    return out, ok


@lru_cache(maxsize=32)
def _tanh_sinh_rule(sigma: float, h: float = 1.0 / 64, u_max: float = 40.0):
    """Nodes of a tanh-sinh rule on (0, 1) with ``log A`` and ``A - A(0)`` precomputed."""
    k_max = math.asinh(2 * u_max / math.pi) / h
    k = np.arange(-math.floor(k_max), math.floor(k_max) + 1) * h
    u = 0.5 * math.pi * np.sinh(k)
    z = special.expit(2 * u)
    zc = special.expit(-2 * u)
    log_cosh_u = np.abs(u) + np.log1p(np.exp(-2 * np.abs(u))) - math.log(2)
    log_w = math.log(h * math.pi / 4) + np.log(np.cosh(k)) - 2 * log_cosh_u
    keep = (z > 0) & (zc > 0)
    z, zc, log_w = z[keep], zc[keep], log_w[keep]
    log_a = _log_A(z, zc, sigma)
    a0 = math.exp(log_A_at_zero(sigma))
    with np.errstate(over="ignore"):
        excess = a0 * np.expm1(log_a - log_A_at_zero(sigma))
    return log_w + log_a, excess, a0


def _kanter_log_f(t, sigma, chunk=2048):
    """Vectorized Kanter integral via the tanh-sinh rule."""
    log_wa, excess, a0 = _tanh_sinh_rule(sigma)
    k = sigma / (1 - sigma)
    out = np.empty(t.shape)
    for start in range(0, t.size, chunk):
        tt = t[start:start + chunk]
        c = tt ** -k
        with np.errstate(over="ignore", invalid="ignore"):
            expo = log_wa[None, :] - np.outer(c, excess)
        expo = np.where(np.isnan(expo), -np.inf, expo)
        log_int = special.logsumexp(expo, axis=1)
        out[start:start + chunk] = (
            math.log(sigma / (1 - sigma)) - np.log(tt) / (1 - sigma) - c * a0 + log_int
        )
    return out


def log_f_sigma(t, p, tol: float = 1e-16, max_terms: int = 600):
    """Log-density of the positive sigma-stable law.

    Uses the alternating series ``(1/pi) sum_j (-1)^(j+1) sin(pi sigma j)
    Gamma(sigma j + 1) / (j! t^(sigma j + 1))`` summed with tracked signs.
    Points where the series would need more than ``max_terms`` terms, fails to
    reach ``tol``, or loses more than eight digits to cancellation are
    evaluated by Kanter's integral instead.
    """
    sigma = _sigma_of(p)
    t_arr = _positive(t).astype(float)
    flat = np.atleast_1d(t_arr).ravel()
    out, ok = _series_log_f(flat, sigma, tol, max_terms)
    if not ok.all():
        out[~ok] = _kanter_log_f(flat[~ok], sigma)
    if not np.all(np.isfinite(out) | (out == -np.inf)) or np.any(np.isnan(out)):
        raise EvaluationError(f"log f_sigma evaluation failed for sigma={sigma}")
    return _out(out.reshape(t_arr.shape), t)


def log_f_sigma_quadrature(t, p, eps: float = 1e-12) -> float:
    """Adaptive-quadrature evaluation of Kanter's integral for one ``t``.

    ``f(t) = sigma/(1-sigma) t^(-1/(1-sigma)) int_0^1 A(z) exp(-t^(-sigma/(1-sigma)) A(z)) dz``.
    The factor ``exp(-c A(0))`` is pulled out so deep left-tail values do not
    underflow.
    """
    sigma = _sigma_of(p)
    t = float(_positive(t))
    k = sigma / (1 - sigma)
    c = t ** -k
    la0 = log_A_at_zero(sigma)
    a0 = math.exp(la0)

    def integrand(z):
        la = float(_log_A(np.array(z), np.array(1.0 - z), sigma))
        return math.exp(la - c * a0 * math.expm1(la - la0))

    brk = [b for b in (min(0.5, 1.0 / math.sqrt(c)), 0.5, 0.9) if eps < b < 1 - eps]
    val, err = integrate.quad(
        integrand, eps, 1 - eps, epsabs=0.0, epsrel=1e-12, limit=400, points=sorted(set(brk))
    )
    if not (val > 0 and math.isfinite(val)) or err > 1e-6 * val:
        raise EvaluationError(f"Kanter quadrature did not converge at t={t}, sigma={sigma}")
    return math.log(sigma / (1 - sigma)) - math.log(t) / (1 - sigma) - c * a0 + math.log(val)


class StableLogDensity:
    """Spline-tabulated ``log f_sigma`` for repeated evaluation in samplers.

    The smooth residual ``log f(t) + A(0) t^(-sigma/(1-sigma))`` is splined in
    ``log t``.  Below the table the residual is extended linearly with its
    small-``t`` asymptotic slope ``-(2-sigma)/(2(1-sigma))``; above it the
    exact evaluator is used.  By default the table starts where
    ``A(0) t^(-sigma/(1-sigma))`` reaches ``1e4`` (but not below ``log t = -60``).
    """

    def __init__(self, sigma: float, log_t_min: float | None = None, log_t_max: float = 18.0,
                 step: float = 0.01):
        self.sigma = _sigma_of(sigma)
        self.k = self.sigma / (1 - self.sigma)
        self.a0 = math.exp(log_A_at_zero(self.sigma))
        if log_t_min is None:
            log_t_min = max(-60.0, -math.log(1e4 / self.a0) / self.k)
        self.log_t_min = log_t_min
        self.log_t_max = log_t_max
        self.slope = -(2 - self.sigma) / (2 * (1 - self.sigma))
        x = np.arange(log_t_min, log_t_max + step / 2, step)
        exact = log_f_sigma(np.exp(x), self.sigma)
        self.step = step
        self._spline = CubicSpline(x, exact + self.a0 * np.exp(-self.k * x))
        self._edge = float(self._spline(log_t_min))
        self.log_t_max = float(x[-1])

    def kernel_args(self) -> tuple:
        """Table data in the argument order of the compiled evaluator."""
        coef = np.ascontiguousarray(self._spline.c, dtype=float)
        return (self.log_t_min, self.step, coef, self.a0, self.k, self.slope, self._edge,
                self.log_t_max)

    def __call__(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        with np.errstate(divide="ignore"):
            x = np.log(t_arr)
        out = np.empty(t_arr.shape)
        inside = (x >= self.log_t_min) & (x <= self.log_t_max)
        out[inside] = self._spline(x[inside]) - self.a0 * np.exp(-self.k * x[inside])
        low = (x < self.log_t_min) & (t_arr > 0)
        if low.any():
            xl = x[low]
            with np.errstate(over="ignore"):
                out[low] = self._edge + self.slope * (xl - self.log_t_min) - self.a0 * np.exp(-self.k * xl)
        high = x > self.log_t_max
        if high.any():
            out[high] = log_f_sigma(t_arr[high], self.sigma)
        out[t_arr <= 0] = -np.inf
        return _out(out, t)


@lru_cache(maxsize=16)
def stable_log_density(sigma: float) -> StableLogDensity:
    """Cached :class:`StableLogDensity` for ``sigma``."""
    return StableLogDensity(sigma)


def log_levy_sigma(x, p):
    """``log rho_sigma(x) = log(sigma / Gamma(1 - sigma)) - (sigma + 1) log x``."""
    sigma = _sigma_of(p)
    x_arr = _positive(x, "x")
    return _out(math.log(sigma) - math.lgamma(1 - sigma) - (sigma + 1) * np.log(x_arr), x)


def log_f_logbeta(t, p: LogBetaParams):
    """Log-density of ``-log Y`` with ``Y ~ Beta(a, b)``."""
    t_arr = _positive(t)
    a, b = p.a, p.b
    const = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    if b == 1:
        body = -a * t_arr
    else:
        # log(1 - e^-t) = log(-expm1(-t))
        body = -a * t_arr + (b - 1) * np.log(-np.expm1(-t_arr))
    return _out(const + body, t)


def log_levy_logbeta(x, p: LogBetaParams):
    """``log rho(x)`` with ``rho(x) = e^(-a x) (1 - e^(-b x)) / (x (1 - e^(-x)))``."""
    x_arr = _positive(x, "x")
    a, b = p.a, p.b
    ratio = np.log(np.expm1(-b * x_arr) / np.expm1(-x_arr))
    return _out(-a * x_arr + ratio - np.log(x_arr), x)


def log_h(t, tilt, p=None):
    """Unnormalized log tilting function; see the tilt classes for conventions."""
    t_arr = _positive(t)
    sigma = None if p is None else _sigma_of(p)
    return _out(np.asarray(tilt.log_h(t_arr, sigma), dtype=float), t)
