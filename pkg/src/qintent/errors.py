"""Shared exception types."""


class QIntentError(Exception):
    """Base class for all package errors."""


class ShapeError(QIntentError, ValueError):
    """Operand shapes do not compose."""


class ConfigError(QIntentError, ValueError):
    """Invalid configuration value or mismatched checkpoint."""


class NumericsError(QIntentError, FloatingPointError):
    """NaN or Inf encountered where finite values are required."""


class GraphError(QIntentError, RuntimeError):
    """Autodiff graph misuse, e.g. backward before forward."""


class VocabError(QIntentError, ValueError):
    """Malformed vocabulary file."""


class ServiceError(QIntentError, RuntimeError):
    """Serving-layer failure (encoder not loaded, bad registration)."""
