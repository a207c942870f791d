"""Exact confidence intervals for the Orey index of Gaussian processes."""

__version__ = "0.1.0"

from .ci import (  # noqa: E402
    ConcentrationBounds,
    ConfidenceInterval,
    bounds_bifbm,
    bounds_fbm,
    bounds_for,
    bounds_fou,
    bounds_subfbm,
    confidence_interval,
)
from .gaussim import GridSpec, ProcessModel, SamplePath, generate, make_rng  # noqa: E402
from .quadvar import increment_gram, s_n, second_order_increments  # noqa: E402

__all__ = [
    "ConcentrationBounds",
    "ConfidenceInterval",
    "GridSpec",
    "ProcessModel",
    "SamplePath",
    "bounds_bifbm",
    "bounds_fbm",
    "bounds_for",
    "bounds_fou",
    "bounds_subfbm",
    "confidence_interval",
    "generate",
    "increment_gram",
    "make_rng",
    "s_n",
    "second_order_increments",
]
