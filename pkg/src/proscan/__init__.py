"""Deterministic digital twin of a press-and-roll near-field positioning device."""

__version__ = "0.1.0"

from .exceptions import (ConfigError, ConvergenceError, DegenerateInputError, ExtrapolationError, FitFailure,
                         GeometryError, ParseError, PlacementError, ProscanError, RangeError)

__all__ = [
    "__version__",
    "ConfigError",
    "ConvergenceError",
    "DegenerateInputError",
    "ExtrapolationError",
    "FitFailure",
    "GeometryError",
    "ParseError",
    "PlacementError",
    "ProscanError",
    "RangeError",
]
