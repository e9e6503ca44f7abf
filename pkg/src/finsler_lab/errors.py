class FinslerError(Exception):
    """Base class for toolkit errors."""


class DomainError(FinslerError, ValueError):
    """A chart point lies outside the structure's domain."""


class DegenerateError(FinslerError, ValueError):
    """A tensor or flag is undefined (zero vector, singular metric, flat flag)."""


class ConvergenceError(FinslerError, RuntimeError):
    """An iterative solver did not reach its tolerance.

    ``best`` carries the best available estimate when one exists.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class NoComparisonTriangle(FinslerError, ValueError):
    """Side lengths cannot be realised by a triangle in the model surface."""


class AngleMeasurementError(FinslerError, RuntimeError):
    """The one-sided difference quotient defining an angle did not settle."""


class HypothesisError(FinslerError, RuntimeError):
    """A check was requested on a fixture that fails its curvature hypotheses."""
