"""Shared exception types.

ConfigError maps to CLI exit code 2, NumericError to exit code 3.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration input."""


class NumericError(RuntimeError):
    """Numeric failure: non-finite intermediate, singular system, degenerate posterior."""


class ShapeError(ValueError):
    """Incompatible array shapes in a tape operation."""
