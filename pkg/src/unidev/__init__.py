"""Normalized uniform-deviation bounds for empirical processes, with desk-scale numerical checks."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ContinuousLine,
    ExplicitMatrix,
    FiniteSpace,
    Intervals,
    Normalizer,
    Ramps,
    Sample,
    Thresholds,
    deviation_sum,
    empirical_mean,
    normalized_sup,
)
from .kernel import solve_L  # noqa: E402

__all__ = [
    "ContinuousLine", "ExplicitMatrix", "FiniteSpace", "Intervals", "Normalizer", "Ramps", "Sample",
    "Thresholds", "deviation_sum", "empirical_mean", "normalized_sup", "solve_L", "__version__",
]
