"""Hurwitz-Radon constructions, AFR verification and typical-rank experiments for real 3-tensors."""

from .errors import RankscopeError
from .tensor import Kind, Mat, Tensor3

__version__ = "0.1.0"

__all__ = ["Kind", "Mat", "RankscopeError", "Tensor3", "__version__"]
