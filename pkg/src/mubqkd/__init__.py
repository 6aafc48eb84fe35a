"""Galois-field mutually unbiased bases, cascaded-interferometer measurement
simulation and asymptotic key rates for the (d+1)-basis QKD protocol."""

from .galois import FieldCtx, GfElement, field, structure_matrices

__version__ = "0.1.0"

__all__ = ["FieldCtx", "GfElement", "field", "structure_matrices", "__version__"]
