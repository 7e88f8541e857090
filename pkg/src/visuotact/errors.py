"""Exception taxonomy for the visuotact package.

Every error raised by the library derives from :class:`VisuotactError` so
callers (and the CLI, which maps them to exit code 2) can catch one base
class. Subclasses also derive from the closest builtin where that helps
interoperability (``ValueError`` for bad inputs, ``OSError`` for storage).
"""


class VisuotactError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(VisuotactError, ValueError):
    """Array / frame / vector dimensions do not match the contract."""


class ChannelError(DimensionError):
    """Frame has the wrong channel count for the operation."""


class OutOfRangeError(VisuotactError, ValueError):
    """A coordinate or index lies outside the valid domain."""


class InsufficientDataError(VisuotactError, ValueError):
    """Too few samples/views/frames to perform the operation."""


class GeometryError(VisuotactError, ValueError):
    """Invalid geometric input (self-intersecting polygon, bad crop, ...)."""


class RankDeficiencyError(VisuotactError, ValueError):
    """A linear solve is rank deficient (e.g. collinear correspondences)."""


class DomainError(VisuotactError, ValueError):
    """Input maps outside the model's valid domain (e.g. ray behind camera)."""


class NumericalError(VisuotactError, ArithmeticError):
    """An iterative numerical routine failed to converge.

    Attributes:
        residual: final residual of the failed iteration, when available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConvergenceError(VisuotactError, ArithmeticError):
    """An optimizer diverged. Carries the best result seen so far.

    Attributes:
        best: best-so-far result object (e.g. a CalibrationResult).
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DegenerateInputError(VisuotactError, ValueError):
    """Input is degenerate for the operation (e.g. zero vector to normalize)."""


class NormalizationError(VisuotactError, ValueError):
    """A vector that must be unit-norm is not."""


class ConfigError(VisuotactError, ValueError):
    """Invalid configuration value (non-positive temperature, bad weights, ...)."""


class OrderingError(VisuotactError, ValueError):
    """A sequence that must be time-ordered is not."""


class ConflictError(VisuotactError):
    """Target resource already exists (e.g. duplicate episode id)."""


class StorageError(VisuotactError, OSError):
    """I/O failure while persisting or loading artifacts."""


class ValidationError(VisuotactError, ValueError):
    """Stored data violates a structural invariant; message names the offender."""


class UsageError(VisuotactError):
    """Command-line usage error (maps to exit code 1)."""
