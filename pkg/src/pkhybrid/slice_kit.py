"""Univariate slice sampling with stepping-out and shrinkage (Neal, 2003)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .exceptions import DomainError, PreconditionError, SamplingError

COLLAPSE_WIDTH = 1e-14


@dataclass(frozen=True)
class SliceConfig:
    """Initial bracket width, stepping-out cap and optional hard bounds."""

    width: float = 1.0
    max_steps: int = 32
    lower: float | None = None
    upper: float | None = None

    def __post_init__(self):
        if not (self.width > 0 and math.isfinite(self.width)):
            raise DomainError("slice width must be positive and finite")
        if self.max_steps < 0:
            raise DomainError("max_steps must be non-negative")
        if self.lower is not None and self.upper is not None and not self.lower < self.upper:
            raise DomainError("lower bound must be below upper bound")


def _inside(x, cfg):
    return (cfg.lower is None or x > cfg.lower) and (cfg.upper is None or x < cfg.upper)


def slice_sample(log_density: Callable[[float], float], x0: float, cfg: SliceConfig, rng,
                 log_fx0: float | None = None) -> float:
    """One slice-sampling transition from ``x0``; leaves ``exp(log_density)`` invariant.

    Bounds are open and handled by truncating the bracket, so points on or
    outside them are never evaluated as candidates.
    """
    x0 = float(x0)
    if not _inside(x0, cfg):
        raise PreconditionError(f"x0={x0} lies outside the slice bounds")
    fx0 = log_density(x0) if log_fx0 is None else log_fx0
    if not math.isfinite(fx0):
        raise PreconditionError(f"log density at x0={x0} is not finite")
    level = fx0 - rng.standard_exponential()

    w = cfg.width
    left = x0 - w * rng.random()
    right = left + w
    j = int(cfg.max_steps * rng.random())
    k = cfg.max_steps - 1 - j
    lo = -math.inf if cfg.lower is None else cfg.lower
    hi = math.inf if cfg.upper is None else cfg.upper
    while j > 0 and left > lo and log_density(left) > level:
        left -= w
        j -= 1
    while k > 0 and right < hi and log_density(right) > level:
        right += w
        k -= 1
    left, right = max(left, lo), min(right, hi)

    tol = COLLAPSE_WIDTH * max(1.0, abs(x0))
    while True:
        x1 = left + (right - left) * rng.random()
        if _inside(x1, cfg):
            fx1 = log_density(x1)
            if fx1 > level:
                return x1
        if x1 < x0:
            left = x1
        else:
            right = x1
        if right - left < tol:
            raise SamplingError(f"slice bracket collapsed around x0={x0}")


def slice_sample_positive(log_density: Callable[[float], float], x0: float, rng,
                          width: float = 1.0, max_steps: int = 32, upper: float | None = None) -> float:
    """Slice-update a positive variable on the log scale.

    The log-scale move uses a fixed bracket width, which is scale-free in the
    original variable while keeping the transition reversible; the Jacobian
    ``x`` is included in the target.
    """
    if not x0 > 0:
        raise PreconditionError("positive slice update needs x0 > 0")

    def log_target(y):
        x = math.exp(y)
        if not x > 0 or (upper is not None and not x < upper):
            return -math.inf
        return log_density(x) + y

    cfg = SliceConfig(width, max_steps, None, None if upper is None else math.log(upper))
    y1 = slice_sample(log_target, math.log(x0), cfg, rng)
    return math.exp(y1)
