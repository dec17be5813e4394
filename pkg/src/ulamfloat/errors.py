"""Exception hierarchy shared by every module."""

from __future__ import annotations


class UlamFloatError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(UlamFloatError, ValueError):
    """An argument lies outside the domain of an operation."""


class ToleranceNotMet(UlamFloatError):
    """An iterative method stopped before reaching its tolerance.

    The best available estimate is kept on ``best`` so callers can decide
    whether it is still usable.
    """

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class NonsmoothPointError(UlamFloatError, ValueError):
    """Derivatives were requested at a kink of a piecewise function."""


class UnboundedError(UlamFloatError):
    """A bracket or region could not be bounded."""


class SingularFitError(UlamFloatError):
    """A least-squares system was rank deficient."""


class ConfigError(UlamFloatError):
    """A run configuration could not be parsed or validated."""
