"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so keep the hierarchy flat and
the meanings disjoint.
"""


class OperonError(Exception):
    """Base class for all package errors."""


class ConfigurationError(OperonError, ValueError):
    """Invalid configuration: bad widths, unknown names, missing fields."""


class ShapeError(OperonError, ValueError):
    """Dimension mismatch between arrays/parameters and their contracts."""


class DataFormatError(OperonError, ValueError):
    """Unrecognized or incompatible on-disk format (schema/version drift)."""


class DataIntegrityError(DataFormatError):
    """Content hash mismatch or truncated file."""


class DivergenceError(OperonError, RuntimeError):
    """Non-finite numbers where finite ones are required."""


class TrainingDivergedError(DivergenceError):
    """Training loss became non-finite.

    Carries the last parameters recorded at a finite-loss epoch boundary and
    the loss history up to that point.
    """

    def __init__(self, message, params=None, history=None):
        super().__init__(message)
        self.params = params
        self.history = history if history is not None else []


class MetricUndefinedError(OperonError, ValueError):
    """Relative error undefined (zero-norm reference); carries absolute RMSE."""

    def __init__(self, message, absolute_rmse=None):
        super().__init__(message)
        self.absolute_rmse = absolute_rmse
