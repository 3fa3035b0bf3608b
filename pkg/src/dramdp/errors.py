"""Exception types raised by the solvers and diagnostics."""

from __future__ import annotations


class DramdpError(Exception):
    pass


class NonErgodic(DramdpError):
    """A kernel failed to contract (no Doeblin pair found or power iteration stalled)."""


class MaxItersExceeded(DramdpError):
    """An iterative solver hit its sweep cap.

    The last iterate and its residual are kept so callers can inspect them.
    """

    def __init__(self, message: str, last_iterate=None, residual: float = float("nan")):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class SupportTooLarge(DramdpError):
    pass


class TooManyPolicies(DramdpError):
    pass


class InsufficientData(DramdpError):
    pass


class ConfigError(DramdpError):
    pass
