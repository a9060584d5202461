"""Exception and warning types raised across the package."""


class GprddError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class FactorizationFailure(GprddError):
    """A covariance matrix stayed non positive definite after jitter escalation."""

    exit_code = 6


class OptimizationFailure(GprddError):
    """Every start of a multi-start optimization failed."""

    exit_code = 6


class EmptyArm(GprddError):
    """The treated or control arm has no observations."""

    exit_code = 4


class EmptySide(EmptyArm):
    """Ingested data has no rows on one side of the boundary."""


class InsufficientSupport(GprddError):
    """Too few points carry nonzero kernel weight for a local fit."""

    exit_code = 5


class ParseError(GprddError):
    """Malformed input file; message carries the row/column location."""

    exit_code = 3


class CampaignFailure(GprddError):
    """More than the tolerated fraction of replications failed."""

    exit_code = 7


class NonConvergence(UserWarning):
    """Split R-hat above threshold for at least one sampled parameter."""
