"""Exception hierarchy shared across the package.

Every error raised by library code derives from :class:`IceposeError` so the
CLI can map failures to exit codes without inspecting messages.
"""


class IceposeError(Exception):
    """Base class for all package errors."""


class SchemaError(IceposeError):
    """Structural mismatch between data and the skeleton/schema it claims."""


class ValidationError(IceposeError):
    """Input violates a documented precondition or invariant."""


class ParseError(ValidationError):
    """A file could not be parsed; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InsufficientDataError(ValidationError):
    """Too few samples to run the requested estimator."""


class FitFailureError(IceposeError):
    """A robust fit did not find an acceptable model."""


class DegenerateFacingError(IceposeError):
    """Hip joints coincide in the xy-plane; facing direction undefined."""


class NormalizationError(IceposeError):
    """Pose cannot be scale-normalized (zero torso length)."""


class ProjectionError(IceposeError):
    """A joint is at or behind the camera plane."""


class ShapeError(IceposeError):
    """Array shape does not match the declared layer/op contract."""


class StateError(IceposeError):
    """Operation called out of order (e.g. backward before forward)."""


class ConfigError(IceposeError):
    """Invalid configuration value."""


class DivergenceError(IceposeError):
    """Training produced a non-finite loss; carries the failing step."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class UndefinedMetricError(IceposeError):
    """Metric has an empty denominator (no evaluable frames/segments)."""
