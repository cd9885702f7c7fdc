from typing import Optional


class HybridPlanError(Exception):
    """Base class of every error raised by hybridplan."""

    pass


class ValidationError(HybridPlanError, ValueError):
    """Inputs violate a precondition."""

    pass


class DegeneratePathError(ValidationError):
    """Path has fewer than two distinct vertices."""

    pass


class FrenetRangeError(ValidationError):
    """Station lies outside the path."""

    pass


class NonConvexObstacleError(ValidationError):
    """Obstacle polygon is not convex."""

    pass


class InvalidParameterError(ValidationError):
    """Parameter is out of its admissible range or has a wrong shape."""

    pass


class SingularDecelerationError(InvalidParameterError):
    """Braking magnitude is zero."""

    pass


class LaneGraphError(ValidationError):
    """Lane graph is malformed."""

    pass


class NoRouteError(ValidationError):
    """Goal lane is unreachable from the start lane."""

    pass


class DiscontinuousRouteError(ValidationError):
    """Consecutive lanes of a route do not meet."""

    pass


class ImpassableCorridorError(ValidationError):
    """Drivable corridor has no room for the footprint."""

    pass


class InvalidRecordError(ValidationError):
    """Record line cannot be decoded."""

    pass


class _PointerError(ValidationError):
    def __init__(self, path: str, message: str):
        self.path = path
        self.reason = message
        super().__init__("%s: %s" % (path or "/", message))


class ScenarioError(_PointerError):
    """Scenario file violates its schema. ``path`` is a JSON pointer."""

    pass


class ConfigError(_PointerError):
    """Configuration file violates its schema. ``path`` is a JSON pointer."""

    pass


class PlanningError(HybridPlanError, RuntimeError):
    """Planner stack failed at runtime."""

    pass


class ColdStartError(PlanningError):
    """Not enough ego history to encode features."""

    pass


class TrainingDivergedError(PlanningError):
    """Loss became non-finite."""

    pass


class QpNotConvergedError(PlanningError):
    """Solver exhausted its iterations."""

    pass


class QpInfeasibleError(PlanningError):
    """Constraints admit no solution."""

    pass


class CorridorMismatchError(PlanningError):
    """Trajectory and corridor do not fit together."""

    pass


class EmptyCandidatesError(PlanningError):
    """Nothing to select from."""

    pass


class SimulationError(PlanningError):
    """Closed-loop run aborted."""

    def __init__(self, message: str, time: Optional[float] = None):
        self.time = time
        super().__init__(message)
