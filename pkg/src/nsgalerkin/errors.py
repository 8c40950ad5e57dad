"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: configuration and precondition
problems exit with 1, numerical failures with 2.
"""


class NSGalerkinError(Exception):
    """Base class for all package errors."""


class ConfigurationError(NSGalerkinError, ValueError):
    """Invalid parameters, unknown config keys, impossible requests."""


class PreconditionError(ConfigurationError):
    """An input violates an operation's precondition."""


class DimensionError(NSGalerkinError, ValueError):
    """Field shapes do not conform to the grid."""


class NumericalError(NSGalerkinError, ArithmeticError):
    """A numerical procedure failed; ``residual`` holds the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DivergenceError(NumericalError):
    """Trajectory blow-up; ``time`` is the time at which the guard tripped."""

    def __init__(self, message, time=None, residual=None):
        super().__init__(message, residual=residual)
        self.time = time


class FormatError(NSGalerkinError, ValueError):
    """A binary cache file is corrupt or has the wrong magic/version."""


class IntegrityError(NSGalerkinError, ValueError):
    """A loaded object fails its invariants or does not match expectations."""
