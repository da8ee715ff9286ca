"""Two-stage trajectory planner for unstructured environments.

Stage 1 produces an initial trajectory (learned predictor, search-based
planner, or sampling baseline); stage 2 refines it into a locally optimal,
kinematically feasible, collision-free trajectory by direct transcription and
an augmented-Lagrangian NLP solve.
"""

__version__ = "0.1.0"

from .geometry import Point2, Polygon, Pose2
from .trajectory import PathPoint, TimedTrajectory
from .vehicle import Control, VehicleParams, VehicleState
from .world import PlanningTask, TaskMap

__all__ = [
    "Point2",
    "Polygon",
    "Pose2",
    "PathPoint",
    "TimedTrajectory",
    "Control",
    "VehicleParams",
    "VehicleState",
    "PlanningTask",
    "TaskMap",
    "__version__",
]
