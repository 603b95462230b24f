"""Exception types shared across the package."""


class WlabError(Exception):
    """Base class for package errors."""


class DomainError(WlabError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigurationError(WlabError, ValueError):
    """A configuration or discretization parameter is invalid."""


class PreconditionError(WlabError, ValueError):
    """A documented precondition of an operation does not hold."""


class QuadratureError(WlabError, RuntimeError):
    """A quadrature did not reach its requested tolerance.

    Parameters
    ----------
    message : str
        Human readable description.
    achieved : float
        Error estimate actually reached.
    requested : float
        Requested tolerance.
    """

    def __init__(self, message, achieved=float("nan"), requested=float("nan")):
        super().__init__(f"{message} (achieved {achieved:.3e}, requested {requested:.3e})")
        self.achieved = achieved
        self.requested = requested


class ConvergenceError(WlabError, RuntimeError):
    """An iterative solver failed to converge."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class BandIncompleteError(WlabError, RuntimeError):
    """Computed eigenpairs do not cover the spectral window a functional needs."""

    def __init__(self, message, window=None):
        super().__init__(message)
        self.window = window


class NoncriticalError(PreconditionError):
    """The non-critical condition fails on the localization region."""
