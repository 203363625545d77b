"""Exception hierarchy shared by the geometry, solver and CLI layers."""

from __future__ import annotations


class CurveFlowError(Exception):
    """Base class for all errors raised by curveflow."""


class DegenerateSegment(CurveFlowError):
    """Two consecutive nodes coincide (zero-length segment)."""

    def __init__(self, message: str, index: int | None = None, t: float | None = None):
        super().__init__(message)
        self.index = index
        self.t = t


class OutsideRegularityDomain(CurveFlowError):
    """A point was evaluated where the surface map is not regular."""

    def __init__(self, message: str, index: int | None = None, t: float | None = None):
        super().__init__(message)
        self.index = index
        self.t = t


class NearSingularMetric(CurveFlowError):
    """det(J J^T) of a parametric surface fell below the singularity floor."""

    def __init__(self, message: str, index: int | None = None, t: float | None = None):
        super().__init__(message)
        self.index = index
        self.t = t


class StepCollapse(CurveFlowError):
    """The adaptive time step fell below the configured floor."""

    def __init__(self, message: str, t: float | None = None, dt: float | None = None,
                 index: int | None = None):
        super().__init__(message)
        self.t = t
        self.dt = dt
        self.index = index


class ParseError(CurveFlowError):
    """Malformed configuration text."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        super().__init__(message)
        self.line = line
        self.field = field


class ValidationError(CurveFlowError):
    """A configuration value violates a documented invariant."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class MissingArtifact(CurveFlowError):
    """A run directory lacks a file required for diagnostics."""


SOLVER_ERRORS = (DegenerateSegment, OutsideRegularityDomain, NearSingularMetric, StepCollapse)
