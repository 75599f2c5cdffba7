"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A spec, grid, or config block is invalid or incomplete."""


class EstimationError(RuntimeError):
    """An estimator failed: non-convergent extrapolation, starved
    conditioning event, or a worker error during a Monte Carlo run.

    May carry a ``partial`` attribute with whatever table was computed
    before the failure.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class IntegrabilityError(ConfigurationError):
    """A distortion integral diverges for the given tail index."""


class InfiniteMeanError(ConfigurationError):
    """A tail-mean quantity was requested for an infinite-mean law."""


class ClosedFormUnavailable(ConfigurationError):
    """A closed form was requested for a mode that only supports Monte
    Carlo evaluation."""
