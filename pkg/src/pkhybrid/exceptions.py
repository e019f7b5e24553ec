"""Exception hierarchy shared by every module of the package."""


class PKError(Exception):
    """Base class for all errors raised by pkhybrid."""


class DomainError(PKError, ValueError):
    """An argument lies outside the domain of a density or sampler."""


class EvaluationError(PKError, ArithmeticError):
    """A numerical evaluation (series, quadrature, tabulation) failed."""


class SamplingError(PKError, RuntimeError):
    """A random variate generator exhausted its iteration budget."""


class PreconditionError(PKError, ValueError):
    """A model state or argument violates a documented invariant."""


class ConfigurationError(PKError, ValueError):
    """Incompatible or invalid run configuration."""


class CapabilityError(PKError, NotImplementedError):
    """The requested exact method is not available for these parameters."""


class DataError(PKError, ValueError):
    """An input data file is missing, empty or malformed."""
