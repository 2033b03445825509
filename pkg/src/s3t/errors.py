"""Exception types shared across the package."""


class ParameterDomainError(ValueError):
    """A model parameter lies outside its admissible domain."""


class ShapeError(ValueError):
    """Input array dimensions are inconsistent with the model."""


class IllConditionedError(ValueError):
    """A matrix required to be invertible is numerically singular.

    Carries the estimated condition number when available.
    """

    def __init__(self, message: str, condition: float | None = None):
        super().__init__(message)
        self.condition = condition


class DegenerateVarianceError(ValueError):
    """A variance that must be positive came out non-positive."""


class SaturationError(RuntimeError):
    """A root or bracket could not be located inside its admissible domain."""


class NoPathError(ValueError):
    """Two stream-network locations are in disconnected components."""


class ConfigError(ValueError):
    """A run configuration is malformed; the message names the offending field."""
