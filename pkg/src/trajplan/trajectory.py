"""Time-indexed trajectory container shared by the profiler, optimizer, and predictor."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .geometry import Pose2
from .vehicle import Control, VehicleState

STATE_FIELDS = ("x", "y", "theta", "v", "phi")
CONTROL_FIELDS = ("a", "w")


class PathPoint(NamedTuple):
    """Geometric path sample: pose plus direction of travel (+1 forward, -1 reverse)."""

    pose: Pose2
    direction: int = 1


@dataclass
class TimedTrajectory:
    """Uniformly sampled trajectory: (P, 5) states [x, y, theta, v, phi] and (P, 2) controls [a, w].

    dt is the uniform sample spacing; t_final = dt * (P - 1).
    """

    dt: float
    states: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.controls = np.asarray(self.controls, dtype=float)
        if self.states.ndim != 2 or self.states.shape[1] != 5:
            raise ValueError(f"states must be (P, 5), got {self.states.shape}")
        if self.controls.shape != (len(self.states), 2):
            raise ValueError(f"controls must be (P, 2) matching states, got {self.controls.shape}")
        if len(self.states) < 2:
            raise ValueError("trajectory needs at least 2 samples")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def t_final(self) -> float:
        return self.dt * (len(self.states) - 1)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.states))

    def samples(self) -> Iterator[tuple[VehicleState, Control]]:
        for s, u in zip(self.states, self.controls):
            yield VehicleState.from_array(s), Control(float(u[0]), float(u[1]))

    def state_at(self, k: int) -> VehicleState:
        return VehicleState.from_array(self.states[k])

    def positions(self) -> np.ndarray:
        return self.states[:, :2]

    def to_json_dict(self) -> dict:
        return {
            "dt": self.dt,
            "states": self.states.tolist(),
            "controls": self.controls.tolist(),
        }

    @staticmethod
    def from_json_dict(d: dict) -> "TimedTrajectory":
        return TimedTrajectory(float(d["dt"]), np.array(d["states"]), np.array(d["controls"]))


def hold_at(pose: Pose2, n: int, dt: float) -> TimedTrajectory:
    """Trajectory that sits at a pose for n samples (degenerate zero-length task)."""
    states = np.tile([pose.x, pose.y, pose.theta, 0.0, 0.0], (n, 1))
    controls = np.zeros((n, 2))
    return TimedTrajectory(dt, states, controls)
