"""Numerical laboratory for random complex zeroes and random nodal lines."""

__version__ = "0.1.0"

from .rng import GaussianStream, GAUSSIAN_METHOD
from .gef import TruncatedGEF, KernelId, sample_gef, covariance, ginibre_rho

__all__ = [
    "GaussianStream",
    "GAUSSIAN_METHOD",
    "TruncatedGEF",
    "KernelId",
    "sample_gef",
    "covariance",
    "ginibre_rho",
    "__version__",
]
