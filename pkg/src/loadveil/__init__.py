"""Privacy measures for smart-meter load hiding and the harness that tests them."""

from .estimators import BinSpec, MutualInfoEstimator, SamplePairs
from .measures import (
    HIGHER,
    LOWER,
    MEASURE_IDS,
    MeasureSpec,
    PrivacyMeasure,
    PrivacyScore,
    evaluate,
)
from .profiles import DiffProfile, InvalidInputError, LoadProfile, NoiseProfile

__version__ = "0.1.0"

__all__ = [
    "BinSpec",
    "DiffProfile",
    "HIGHER",
    "InvalidInputError",
    "LOWER",
    "LoadProfile",
    "MEASURE_IDS",
    "MeasureSpec",
    "MutualInfoEstimator",
    "NoiseProfile",
    "PrivacyMeasure",
    "PrivacyScore",
    "SamplePairs",
    "evaluate",
]
