"""Exception types shared across the package.

Every error raised on purpose derives from EdgeReidError so callers can
distinguish deliberate diagnostics from genuine bugs. The subclasses mirror
the failure categories surfaced by the command line tool: configuration
problems exit with 1, runtime failures with 2.
"""


class EdgeReidError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(EdgeReidError, ValueError):
    """Invalid configuration value, unknown key, or inconsistent settings."""


class InputError(EdgeReidError, ValueError):
    """A caller-supplied value is outside the documented domain."""


class ShapeError(EdgeReidError, ValueError):
    """Array arguments with incompatible shapes."""


class DataError(EdgeReidError, ValueError):
    """Malformed or insufficient observation data."""


class CheckpointError(EdgeReidError, ValueError):
    """Unreadable, corrupt, or incompatible checkpoint document."""


class NumericError(EdgeReidError, ArithmeticError):
    """A non-finite value appeared where the math requires finite numbers."""


class DivergenceError(EdgeReidError, ArithmeticError):
    """Training produced a non-finite loss; the model was rolled back."""
