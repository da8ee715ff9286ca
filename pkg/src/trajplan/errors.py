"""Exception types shared across the planner."""


class TrajplanError(Exception):
    """Base class for all planner errors."""


class DegenerateGeometryError(TrajplanError):
    """Polygon too small / collapsed to be used in area computations."""


class InvalidSteeringError(TrajplanError):
    """Steering angle at or beyond the tan() singularity (|phi| >= pi/2)."""


class SearchExhaustedError(TrajplanError):
    """Graph search ran out of nodes or budget without reaching the goal."""


class InvalidTaskError(TrajplanError):
    """Start or goal configuration is unusable (e.g. in collision)."""


class NoSolutionError(TrajplanError):
    """Sampling planner hit its iteration budget without connecting the goal."""


class InfeasibleTimeError(TrajplanError):
    """Fixed trajectory horizon is too short for the requested path."""


class EmptyPathError(TrajplanError):
    """A path with no points was passed where at least one pose is required."""


class ShapeMismatchError(TrajplanError):
    """Tensor shapes are inconsistent at graph construction time."""


class WeightFormatError(TrajplanError):
    """Weight file is corrupt, truncated, or does not match the model."""


class ConfigError(TrajplanError):
    """Configuration file or value out of range."""
