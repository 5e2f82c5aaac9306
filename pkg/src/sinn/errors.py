"""Exception types shared across the package."""

from __future__ import annotations


class SinnError(Exception):
    """Base class for all package errors."""


class ParameterError(SinnError, ValueError):
    """A parameter is outside its domain."""


class ShapeError(SinnError, ValueError):
    """Array shapes are inconsistent."""


class NumericError(SinnError, FloatingPointError):
    """A non-finite value appeared in a computation."""


class DivergenceError(NumericError):
    """A simulated trajectory left the finite range."""

    def __init__(self, msg: str, trajectory: int | None = None, step: int | None = None):
        super().__init__(msg)
        self.trajectory = trajectory
        self.step = step


class InsufficientDataError(SinnError, ValueError):
    """Not enough samples for the requested estimate."""


class DegenerateError(SinnError, ValueError):
    """An estimator normalization is zero (e.g. constant signal)."""


class FormatError(SinnError, ValueError):
    """A file does not match the expected format."""


class TrainingFailed(SinnError):
    """Training exhausted its restarts without meeting the stopping criterion."""

    def __init__(self, msg: str, params=None, report=None):
        super().__init__(msg)
        self.params = params
        self.report = report
