"""
Error types raised by the pipeline.

The CLI maps ConfigError to exit code 2 and every other LodSimError to 3.
"""

from typing import Optional


class LodSimError(Exception):
    """Base class for all pipeline failures."""


class ConfigError(LodSimError):
    """Scene file, manifest or option is invalid."""


class MeshError(LodSimError):
    """Mesh could not be parsed or failed validation."""

    def __init__(self, message: str, element: Optional[int] = None):
        super().__init__(message)
        self.element = element


class HierarchyError(LodSimError):
    """Levels of a hierarchy are inconsistent with one another."""


class BindingError(LodSimError):
    """A vertex could not be bound to a host element."""

    def __init__(self, message: str, vertex: Optional[int] = None):
        super().__init__(message)
        self.vertex = vertex


class ProlongationError(LodSimError):
    """Operator construction or projection failed."""

    def __init__(self, message: str, rank: Optional[int] = None, expected_rank: Optional[int] = None):
        super().__init__(message)
        self.rank = rank
        self.expected_rank = expected_rank


class MaterialError(LodSimError):
    """Material parameters out of range."""


class InfeasibleStateError(LodSimError):
    """A contact distance is zero or negative."""


class SolverError(LodSimError):
    """Newton solve did not reach the decrement tolerance."""

    def __init__(self, message: str, best_x=None, report=None):
        super().__init__(message)
        self.best_x = best_x
        self.report = report


class GridDependencyError(LodSimError):
    """A solution-grid cell was written before the cells it depends on."""


class RunStoreError(LodSimError):
    """Run directory is missing files or incomplete."""
