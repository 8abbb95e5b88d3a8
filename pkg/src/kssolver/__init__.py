"""Pseudo-spectral solver and verification harness for a parabolic-hyperbolic
chemotaxis system on the periodic box."""

__version__ = "0.1.0"

from .spectral_core import FrequencyGrid, PhysicalField, SpectralField, make_grid  # noqa: E402
from .mild_solver import ModelParams, picard_solve, etd_march  # noqa: E402

__all__ = [
    "__version__",
    "FrequencyGrid",
    "PhysicalField",
    "SpectralField",
    "make_grid",
    "ModelParams",
    "picard_solve",
    "etd_march",
]
