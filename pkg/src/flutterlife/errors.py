"""Exception hierarchy shared by all pipeline stages.

The CLI maps these onto exit codes: ``ConfigError`` -> 1, ``DataError`` -> 2,
``NumericalFailure`` (and subclasses) -> 3.
"""


class FlutterLifeError(Exception):
    """Base class for all package errors."""


class ConfigError(FlutterLifeError):
    """Invalid configuration or missing upstream artifact."""


class DataError(FlutterLifeError):
    """Malformed or insufficient input data."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class DomainError(FlutterLifeError, ValueError):
    """Argument outside the valid domain of a function."""


class NumericalFailure(FlutterLifeError):
    """A numerical procedure did not converge or became unstable."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class IdentificationSkipped(FlutterLifeError):
    """No identifiable spectral peak in the requested band."""


class NoFlutterInRange(FlutterLifeError):
    """No flutter crossing exists inside the scanned reduced-velocity range."""
