"""Exception hierarchy shared by every zop module."""


class ZopError(Exception):
    """Base class for all errors raised by zop."""


class InputError(ZopError, ValueError):
    """Malformed argument: wrong dimension, bad sign, inverted bounds."""


class ConfigurationError(ZopError, ValueError):
    """Invalid solver, problem or experiment configuration.

    ``violations`` holds ``(key_path, message)`` pairs when the error comes
    from config validation, so callers can report every problem at once.
    """

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class UnsupportedOperation(ZopError):
    """The requested operation is not available for this problem."""


class OracleError(ZopError):
    """An inexact oracle could not produce a certified evaluation."""

    def __init__(self, message, best_gap_bound=None):
        super().__init__(message)
        self.best_gap_bound = best_gap_bound


class RunAborted(ZopError):
    """Solver run stopped early; ``record`` holds the partial trajectory."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class CertificationError(ZopError):
    """The stationarity certifier's inner solve diverged or failed."""
