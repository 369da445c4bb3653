"""Numerical checks of the first-order adiabatic approximant for ``H0 + eps H1``."""

from .errors import AdiabaticLabError, GapViolationError
from .operators import (
    ModelBundle,
    OperatorFamily,
    build_constant,
    build_rank_one_grid,
    build_rotating_two_level,
)
from .spectral import ContourSpec, projector_frame, riesz_projector

__version__ = "0.1.0"
