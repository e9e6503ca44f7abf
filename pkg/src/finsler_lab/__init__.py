"""Numerical Finsler geometry: norms and tensors, curvature, geodesics and
distance, Busemann-Hausdorff volume, and Toponogov-type comparison checks."""

__version__ = "0.1.0"

from .errors import (AngleMeasurementError, ConvergenceError, DegenerateError, DomainError,
                     FinslerError, HypothesisError, NoComparisonTriangle)
from .fixtures import REGISTRY, make_fixture
from .norm import FinslerStructure

__all__ = ["__version__", "FinslerStructure", "make_fixture", "REGISTRY", "FinslerError",
           "DomainError", "DegenerateError", "ConvergenceError", "NoComparisonTriangle",
           "AngleMeasurementError", "HypothesisError"]
