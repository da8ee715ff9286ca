"""Speed planning: turn a geometric path into a time-parameterized trajectory.

Each monotone-direction run of the path gets a rest-to-rest trapezoidal speed
profile at the acceleration limit.  Segment durations are rounded up to whole
grid intervals so that every direction switch lands exactly on a v = 0 sample,
and the remaining horizon holds the goal state.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import EmptyPathError, InfeasibleTimeError
from .trajectory import PathPoint, TimedTrajectory
from .vehicle import VehicleParams

# Chords shorter than this are treated as duplicate points.
_MIN_CHORD = 1e-9


def trapezoid_timing(length: float, v_max: float, a_max: float) -> tuple[float, float]:
    """Minimum rest-to-rest travel time over `length` and the peak speed reached.

    Trapezoidal when the distance allows cruising at v_max
    (t = L/v_max + v_max/a_max), triangular otherwise (t = 2*sqrt(L/a_max)).
    """
    if length <= 0.0:
        return 0.0, 0.0
    if length >= v_max * v_max / a_max:
        return length / v_max + v_max / a_max, v_max
    v_peak = math.sqrt(length * a_max)
    return 2.0 * v_peak / a_max, v_peak


def _peak_for_duration(length: float, duration: float, a_max: float) -> float:
    """Peak speed of the rest-to-rest trapezoid covering `length` in exactly `duration`."""
    disc = a_max * a_max * duration * duration - 4.0 * a_max * length
    disc = max(disc, 0.0)
    return 0.5 * (a_max * duration - math.sqrt(disc))


def _trapezoid_speed(tau: float, v_peak: float, a_max: float, duration: float) -> float:
    return max(0.0, min(a_max * tau, v_peak, a_max * (duration - tau)))


def _trapezoid_distance(tau: float, v_peak: float, a_max: float, duration: float, length: float) -> float:
    tau = min(max(tau, 0.0), duration)
    t_ramp = v_peak / a_max
    if tau <= t_ramp:
        return 0.5 * a_max * tau * tau
    if tau <= duration - t_ramp:
        return 0.5 * v_peak * t_ramp + v_peak * (tau - t_ramp)
    rem = duration - tau
    return length - 0.5 * a_max * rem * rem


def _slew_limit(values: np.ndarray, max_step: float, k_start: int, k_end: int) -> np.ndarray:
    """Rate limiting with zero anchors outside [k_start, k_end].

    Forward and backward clipping passes bound the per-sample change by
    max_step; the final clip into the zero-anchored envelope (itself
    max_step-Lipschitz) preserves that bound while forcing the idle prefix
    and suffix to zero steering.
    """
    out = values.copy()
    for i in range(1, len(out)):
        out[i] = np.clip(out[i], out[i - 1] - max_step, out[i - 1] + max_step)
    for i in range(len(out) - 2, -1, -1):
        out[i] = np.clip(out[i], out[i + 1] - max_step, out[i + 1] + max_step)
    idx = np.arange(len(out))
    envelope = max_step * np.minimum(np.maximum(idx - k_start, 0), np.maximum(k_end - idx, 0))
    return np.clip(out, -envelope, envelope)


def profile(
    path: Sequence[PathPoint],
    params: VehicleParams,
    n_out: int,
    t_final: float,
) -> TimedTrajectory:
    """Time-parameterize a directed path into n_out uniform samples over [0, t_final].

    Steering angle is recovered from path curvature (phi = atan(L * kappa),
    sign-corrected on reverse runs) and slew-limited so the sampled steering
    rate stays within w_max.  Raises InfeasibleTimeError when the quantized
    segment durations exceed t_final.
    """
    if n_out < 2:
        raise ValueError("n_out must be at least 2")
    if t_final <= 0.0:
        raise ValueError("t_final must be positive")
    if len(path) == 0:
        raise EmptyPathError("cannot profile an empty path")

    dt = t_final / (n_out - 1)

    # Drop duplicate consecutive points.
    pts: list[PathPoint] = [path[0]]
    for p in path[1:]:
        q = pts[-1]
        if math.hypot(p.pose.x - q.pose.x, p.pose.y - q.pose.y) > _MIN_CHORD:
            pts.append(p)

    if len(pts) == 1:
        p0 = pts[0].pose
        states = np.tile([p0.x, p0.y, p0.theta, 0.0, 0.0], (n_out, 1))
        return TimedTrajectory(dt, states, np.zeros((n_out, 2)))

    xy = np.array([[p.pose.x, p.pose.y] for p in pts])
    theta = np.unwrap(np.array([p.pose.theta for p in pts]))
    directions = np.array([p.direction for p in pts])
    chords = np.hypot(*(xy[1:] - xy[:-1]).T)
    arc = np.concatenate([[0.0], np.cumsum(chords)])

    # Curvature along the path: d(theta)/d(arc), central differences.
    kappa = np.zeros(len(pts))
    span = arc[2:] - arc[:-2]
    kappa[1:-1] = np.where(span > _MIN_CHORD, (theta[2:] - theta[:-2]) / np.maximum(span, _MIN_CHORD), 0.0)
    kappa[0] = (theta[1] - theta[0]) / max(chords[0], _MIN_CHORD)
    kappa[-1] = (theta[-1] - theta[-2]) / max(chords[-1], _MIN_CHORD)

    # Split into monotone-direction segments.  The direction tag of the later
    # point labels each chord.
    seg_bounds = [0]
    for i in range(1, len(chords)):
        if directions[i + 1] != directions[i]:
            seg_bounds.append(i)
    seg_bounds.append(len(chords))

    # Motion starts one node late so the first sample carries zero controls
    # (the transcription pins u = 0 at both trajectory ends).
    segments = []  # (s_start, length, direction, t_start, duration, v_peak)
    t_cursor = dt
    for a, b in zip(seg_bounds[:-1], seg_bounds[1:]):
        length = float(arc[b] - arc[a])
        if length <= _MIN_CHORD:
            continue
        direction = int(directions[a + 1])
        t_min, _ = trapezoid_timing(length, params.v_max, params.a_max)
        duration = max(1, math.ceil(t_min / dt - 1e-9)) * dt
        v_peak = _peak_for_duration(length, duration, params.a_max)
        segments.append((float(arc[a]), length, direction, t_cursor, duration, v_peak))
        t_cursor += duration

    if t_cursor > t_final - dt + 1e-9:
        raise InfeasibleTimeError(
            f"path needs {t_cursor:.2f} s of motion but the horizon is {t_final:.2f} s"
        )

    states = np.zeros((n_out, 5))
    goal = pts[-1].pose
    start_pose = pts[0].pose
    for k in range(n_out):
        t = k * dt
        seg = None
        for s in segments:
            if s[3] - 1e-9 <= t <= s[3] + s[4] + 1e-9:
                seg = s
                break
        if seg is None:
            if segments and t < segments[0][3]:
                states[k] = [start_pose.x, start_pose.y, theta[0], 0.0, 0.0]
            else:
                states[k] = [goal.x, goal.y, theta[-1], 0.0, 0.0]
            continue
        s_start, length, direction, t0, duration, v_peak = seg
        tau = t - t0
        s_local = _trapezoid_distance(tau, v_peak, params.a_max, duration, length)
        s_global = min(s_start + s_local, arc[-1])
        j = int(np.searchsorted(arc, s_global, side="right")) - 1
        j = min(max(j, 0), len(pts) - 2)
        denom = max(arc[j + 1] - arc[j], _MIN_CHORD)
        frac = (s_global - arc[j]) / denom
        x, y = xy[j] + frac * (xy[j + 1] - xy[j])
        th = theta[j] + frac * (theta[j + 1] - theta[j])
        kap = kappa[j] + frac * (kappa[j + 1] - kappa[j])
        v = direction * _trapezoid_speed(tau, v_peak, params.a_max, duration)
        phi = math.atan(direction * kap * params.wheelbase)
        states[k] = [x, y, th, v, phi]

    states[:, 4] = np.clip(states[:, 4], -params.phi_max, params.phi_max)
    if segments:
        k_start = int(round(segments[0][3] / dt))
        k_end = int(round((segments[-1][3] + segments[-1][4]) / dt))
    else:
        k_start, k_end = 0, n_out - 1
    states[:, 4] = _slew_limit(states[:, 4], params.w_max * dt, k_start, k_end)

    controls = np.zeros((n_out, 2))
    controls[:-1, 0] = np.diff(states[:, 3]) / dt
    controls[:-1, 1] = np.diff(states[:, 4]) / dt
    controls[:, 0] = np.clip(controls[:, 0], -params.a_max, params.a_max)
    controls[:, 1] = np.clip(controls[:, 1], -params.w_max, params.w_max)
    return TimedTrajectory(dt, states, controls)
