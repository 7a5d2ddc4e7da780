"""Exception types shared across the package."""


class CircleCoverError(Exception):
    """Base class for all package errors."""


class NonMonotoneError(CircleCoverError):
    """A length rule produced an increasing adjacent pair."""


class OutOfRangeError(CircleCoverError):
    """A value left its required range, e.g. a length outside (0, 1)."""


class UnboundedError(CircleCoverError):
    """A sum has no finite value within the configured index horizon."""


class UndefinedScaleError(CircleCoverError):
    """A quantized-scale statistic was requested below the first scale."""


class EmptyLambdaError(CircleCoverError):
    """No running-maximum index satisfies the arc lower bound."""


class HorizonExceededError(CircleCoverError):
    """Block search ran past its index budget."""

    def __init__(self, k, message=None):
        self.k = k
        super().__init__(message or f"no block end found for level k={k} within the index budget")


class ScaleMissedError(CircleCoverError):
    """Bisection could not land h(n) inside a scale window."""


class BudgetExceededError(CircleCoverError):
    """A perturbation does not fit within the requested changed-mass budget."""


class NoDonorError(CircleCoverError):
    """No donor region with density >= 1 is available for mass correction."""


class DepthExceededError(CircleCoverError):
    """Cantor construction deeper than the addressing limit."""


class ResolutionExceededError(CircleCoverError):
    """A radius finer than the built measure resolution was requested."""


class AtomBudgetError(CircleCoverError):
    """Pairwise energy requested for more atoms than the O(n^2) guard allows."""


class ScaleOutOfRangeError(CircleCoverError):
    """Kernel case classification requested outside the quantized scales."""


class ConfigError(CircleCoverError):
    """An experiment configuration failed validation."""
