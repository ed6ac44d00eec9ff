"""Exception hierarchy shared by the physics and analysis modules.

The CLI maps these onto exit codes: :class:`ConfigError` -> 2,
:class:`FitFailure` -> 4, anything else derived from :class:`ProscanError` -> 3.
"""


class ProscanError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ProscanError, ValueError):
    """A scenario configuration failed validation."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class RangeError(ProscanError, ValueError):
    """An argument lies outside the tabulated or physical range."""


class GeometryError(ProscanError, ValueError):
    """An impossible geometry, e.g. a particle penetrating a substrate."""


class PlacementError(GeometryError):
    """A source was placed too close to the edge of a frame."""


class DegenerateInputError(ProscanError, ValueError):
    """Input data carry no usable information (flat, all-zero, saturated)."""


class ExtrapolationError(ProscanError, ValueError):
    """Too few samples on one side of a region to extrapolate across it."""


class ConvergenceError(ProscanError, ArithmeticError):
    """A series did not converge; ``partial_sum`` holds the last value."""

    def __init__(self, message, partial_sum=None, n_terms=None):
        super().__init__(message)
        self.partial_sum = partial_sum
        self.n_terms = n_terms


class FitFailure(ProscanError, RuntimeError):
    """A nonlinear fit did not converge.

    ``residual`` is the residual norm of the last iterate and ``diagnostics``
    a free-form dict (solver status, number of evaluations, ...).
    """

    def __init__(self, message, residual=None, diagnostics=None):
        super().__init__(message)
        self.residual = residual
        self.diagnostics = dict(diagnostics or {})


class ParseError(ProscanError, ValueError):
    """A data file did not parse; carries the 1-based ``line`` and ``column``."""

    def __init__(self, message, path=None, line=None, column=None):
        loc = ":".join(str(v) for v in (path, line, column) if v is not None)
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line
        self.column = column
