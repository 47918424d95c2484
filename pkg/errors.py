"""Exception hierarchy shared by the planner packages."""
from typing import Optional


class MergePlannerError(RuntimeError):
    """Base class for every contract violation raised by this project."""


class DegeneratePath(MergePlannerError):
    """Waypoints collapse onto each other or the path is shorter than one step."""


class OutOfCorridor(MergePlannerError):
    """A point is too far from the reference path to be projected."""


class InconsistentRules(MergePlannerError):
    """Map rules reference positions outside the route or contradict each other."""


class NoContext(MergePlannerError):
    """The ego position is not covered by any situation context."""


class MissingAnnotation(MergePlannerError):
    """A trajectory leaves the safe set but carries no PNR/PGA times."""


class NonpositiveDuration(MergePlannerError):
    """A segment was requested with a duration <= 0."""


class Infeasible(MergePlannerError):
    """Not even the fail-safe option satisfies the constraints."""


class SolverStall(MergePlannerError):
    """The tracking solver stopped improving while constraints are still violated."""


class Unfinished(MergePlannerError):
    """A run log ended before reaching a terminal condition."""


class EmptyBatch(MergePlannerError):
    """No completed runs were found in an output directory."""


class ScenarioError(MergePlannerError):
    """Scenario JSON failed validation.

    Args:
        field: Dotted path of the offending field, e.g. ``actors[2].v0``.
        message: Human readable reason.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


def error_report(exc: BaseException, field: Optional[str] = None) -> dict:
    """Machine-readable description of an error for the CLI's error.json."""
    return {
        "error": type(exc).__name__,
        "field": getattr(exc, "field", field),
        "message": str(exc),
    }
