"""Bicycle-model kinematics, physical limits, footprint, and Euler integration."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, InvalidSteeringError
from .geometry import Polygon, Pose2


@dataclass(frozen=True)
class VehicleParams:
    """Geometric and actuation limits of the vehicle.

    Defaults are the reference passenger-car values used throughout the
    benchmarks: wheelbase 2.8 m, front hang 0.96 m, rear hang 0.929 m, width
    1.9 m, and symmetric limits v_max 2.5 m/s, a_max 2 m/s^2, phi_max 0.7 rad,
    w_max 0.85 rad/s.
    """

    wheelbase: float = 2.8
    front_hang: float = 0.96
    rear_hang: float = 0.929
    width: float = 1.9
    v_max: float = 2.5
    a_max: float = 2.0
    phi_max: float = 0.7
    w_max: float = 0.85

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (value > 0.0 and math.isfinite(value)):
                raise ConfigError(f"vehicle parameter {name} must be strictly positive, got {value}")
        if self.phi_max >= math.pi / 2:
            raise ConfigError("phi_max must stay below pi/2 (tan singularity)")

    @property
    def length(self) -> float:
        return self.rear_hang + self.wheelbase + self.front_hang

    def body_corners(self) -> np.ndarray:
        """Footprint corners in the body frame (rear-axle center at origin), CCW."""
        lo, hi = -self.rear_hang, self.wheelbase + self.front_hang
        h = self.width / 2.0
        return np.array([[lo, -h], [hi, -h], [hi, h], [lo, h]])


class VehicleState(NamedTuple):
    pose: Pose2
    v: float = 0.0
    phi: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.pose.x, self.pose.y, self.pose.theta, self.v, self.phi])

    @staticmethod
    def from_array(a) -> "VehicleState":
        return VehicleState(Pose2(float(a[0]), float(a[1]), float(a[2])), float(a[3]), float(a[4]))


class Control(NamedTuple):
    a: float = 0.0  # longitudinal acceleration, m/s^2
    w: float = 0.0  # steering rate, rad/s


def derivative(s: VehicleState, u: Control, p: VehicleParams) -> np.ndarray:
    """Time derivative of (x, y, theta, v, phi) under the bicycle model.

    (v cos(theta), v sin(theta), v tan(phi)/L, a, w).  Raises
    InvalidSteeringError at |phi| >= pi/2 where tan blows up.
    """
    if abs(s.phi) >= math.pi / 2:
        raise InvalidSteeringError(f"steering angle {s.phi:g} rad at tan() singularity")
    th = s.pose.theta
    return np.array([
        s.v * math.cos(th),
        s.v * math.sin(th),
        s.v * math.tan(s.phi) / p.wheelbase,
        u.a,
        u.w,
    ])


def derivative_array(states: np.ndarray, controls: np.ndarray, p: VehicleParams) -> np.ndarray:
    """Vectorized :func:`derivative` over (N, 5) states and (N, 2) controls."""
    phi = states[:, 4]
    if np.any(np.abs(phi) >= math.pi / 2):
        raise InvalidSteeringError("steering angle at tan() singularity")
    v, th = states[:, 3], states[:, 2]
    out = np.empty_like(states)
    out[:, 0] = v * np.cos(th)
    out[:, 1] = v * np.sin(th)
    out[:, 2] = v * np.tan(phi) / p.wheelbase
    out[:, 3] = controls[:, 0]
    out[:, 4] = controls[:, 1]
    return out


def derivative_jacobian(s: VehicleState, u: Control, p: VehicleParams) -> np.ndarray:
    """Analytic Jacobian of :func:`derivative` w.r.t. (x, y, theta, v, phi, a, w): (5, 7)."""
    th, v, phi = s.pose.theta, s.v, s.phi
    J = np.zeros((5, 7))
    J[0, 2] = -v * math.sin(th)
    J[0, 3] = math.cos(th)
    J[1, 2] = v * math.cos(th)
    J[1, 3] = math.sin(th)
    J[2, 3] = math.tan(phi) / p.wheelbase
    J[2, 4] = v / (math.cos(phi) ** 2 * p.wheelbase)
    J[3, 5] = 1.0
    J[4, 6] = 1.0
    return J


def integrate_euler(s: VehicleState, u: Control, h: float, p: VehicleParams) -> VehicleState:
    """One forward-Euler step of length h.

    This is the exact formula the transcription uses for its dynamics defect
    rows, so a trajectory produced by chaining these steps is defect-free by
    construction.
    """
    if h <= 0.0:
        raise ValueError(f"step size must be positive, got {h}")
    d = derivative(s, u, p)
    arr = s.as_array() + h * d
    return VehicleState.from_array(arr)


def footprint(s: VehicleState, p: VehicleParams) -> Polygon:
    """Vehicle rectangle at the given state, CCW, rear-axle center at the pose."""
    return footprint_of_pose(s.pose, p)


def footprint_of_pose(pose: Pose2, p: VehicleParams) -> Polygon:
    c, sn = math.cos(pose.theta), math.sin(pose.theta)
    body = p.body_corners()
    world = body @ np.array([[c, sn], [-sn, c]]) + np.array([pose.x, pose.y])
    return Polygon(world)


def check_limits(s: VehicleState, u: Control, p: VehicleParams) -> list[tuple[str, float, float]]:
    """Return (tag, value, limit) for every violated box limit; empty when legal."""
    violations = []
    if abs(s.v) > p.v_max:
        violations.append(("velocity", s.v, p.v_max))
    if abs(u.a) > p.a_max:
        violations.append(("acceleration", u.a, p.a_max))
    if abs(s.phi) > p.phi_max:
        violations.append(("steering", s.phi, p.phi_max))
    if abs(u.w) > p.w_max:
        violations.append(("steering_rate", u.w, p.w_max))
    return violations
