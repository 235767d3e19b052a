"""Numerical experiments on the fundamental gap of convex domains in curved surfaces."""
from . import comparison, jacobi, model1d, spectral2d, surface, verify
from .errors import FundGapError

__all__ = ["comparison", "jacobi", "model1d", "spectral2d", "surface", "verify", "FundGapError"]
__version__ = "0.1.0"
