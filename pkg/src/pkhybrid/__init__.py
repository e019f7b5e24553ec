"""Hybrid conditional/marginal MCMC for Poisson-Kingman mixture models."""
from .diagnostics import EssReport, ess, forward_generate, geweke_test, py_eppf
from .estimator import PKMixture
from .exceptions import (
    CapabilityError,
    ConfigurationError,
    DataError,
    DomainError,
    EvaluationError,
    PKError,
    PreconditionError,
    SamplingError,
)
from .model import LogBetaPrior, NormalLikelihood, SeatingState, StablePrior
from .sampler import DirectSlice, HybridSampler, MhStable, SliceAux, SweepSettings
from .stable_math import NGG, LogBetaParams, NormalizedStable, PitmanYor, SigmaStableParams

__version__ = "0.1.0"

__all__ = [
    "CapabilityError", "ConfigurationError", "DataError", "DirectSlice", "DomainError",
    "EssReport", "EvaluationError", "HybridSampler", "LogBetaParams", "LogBetaPrior",
    "MhStable", "NGG", "NormalLikelihood", "NormalizedStable", "PKError", "PKMixture",
    "PitmanYor", "PreconditionError", "SamplingError", "SeatingState", "SigmaStableParams",
    "SliceAux", "StablePrior", "SweepSettings", "ess", "forward_generate", "geweke_test",
    "py_eppf",
]
