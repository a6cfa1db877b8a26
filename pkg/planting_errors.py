"""
Error types for the tree planting toolkit.

The CLI maps these onto exit codes:
    InputDataError            -> 2
    InfeasiblePlacementError  -> 3 (CapacityError included)
    InvariantViolation        -> 4
"""


class PlantingError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class InputDataError(PlantingError, ValueError):
    """Unreadable, malformed or inconsistent input data, including out-of-range settings."""

    exit_code = 2


class InfeasiblePlacementError(PlantingError):
    """A tree placement violates the land-cover or non-overlap constraints."""

    exit_code = 3


class CapacityError(InfeasiblePlacementError):
    """Fewer feasible, non-overlapping positions remain than trees requested."""


class InvariantViolation(PlantingError):
    """An internal consistency check failed."""

    exit_code = 4


class StaleSvfError(InvariantViolation):
    """Tmrt was requested on an area whose sky view factors no longer match its vegetation."""
