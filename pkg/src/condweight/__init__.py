"""Conditional inclusion probabilities and conditional Horvitz-Thompson estimation."""

from condweight.kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
