"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes (see ``clonedyn.cli``): configuration
problems exit with 2, numerical failures with 3, verification failures
with 4.  Library code raises; only the CLI decides process-level policy.
"""


class CloneDynError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CloneDynError):
    """A configuration document (or CLI argument set) failed validation."""


class DomainError(CloneDynError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ShapeError(CloneDynError, ValueError):
    """An array argument has the wrong length or dimensionality."""


class MassMismatchError(CloneDynError, ValueError):
    """Wasserstein-1 precondition failure: the two measures must both be
    probability measures (unit mass within 1e-12)."""


class ResolutionError(CloneDynError, ValueError):
    """The spatial grid is too coarse to resolve a requested kernel width."""


class NumericsError(CloneDynError, RuntimeError):
    """A numerical routine (LP solve, quadrature, ...) failed to converge."""


class IntegrationError(NumericsError):
    """Time integration aborted.  ``t_last`` is the last valid time."""

    def __init__(self, message, t_last=None):
        super().__init__(message)
        self.t_last = t_last


class BlowupError(IntegrationError):
    """NaN/Inf appeared in the state vector during integration."""


class NegativityError(IntegrationError):
    """A state component undershot below the clamping tolerance."""
