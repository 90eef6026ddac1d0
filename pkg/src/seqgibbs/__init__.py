"""Sequential Gibbs posteriors, Bingham sampling and bootstrap-matched calibration."""

__version__ = "0.1.0"

from .errors import (
    DataError,
    EigengapError,
    NumericalError,
    SeqGibbsError,
    UnsupportedModelError,
)
from .sampling import RngStream

__all__ = [
    "DataError",
    "EigengapError",
    "NumericalError",
    "RngStream",
    "SeqGibbsError",
    "UnsupportedModelError",
]
