import math

import numpy as np
import pytest

from trajplan.errors import EmptyPathError, InfeasibleTimeError
from trajplan.geometry import Pose2
from trajplan.speed_profile import profile, trapezoid_timing
from trajplan.trajectory import PathPoint


def straight_path(length, n=41, direction=1):
    xs = np.linspace(0.0, length, n)
    return [PathPoint(Pose2(x, 0.0, 0.0), direction) for x in xs]


class TestTrapezoidTiming:
    def test_ten_meter_closed_form(self, vehicle):
        # long enough to cruise: t = L/v_max + v_max/a_max
        t, v_peak = trapezoid_timing(10.0, vehicle.v_max, vehicle.a_max)
        assert v_peak == pytest.approx(min(2.5, math.sqrt(10.0 * 2.0)))
        assert t == pytest.approx(10.0 / 2.5 + 2.5 / 2.0)  # 5.25 s

    def test_short_triangular(self, vehicle):
        L = 1.0
        t, v_peak = trapezoid_timing(L, vehicle.v_max, vehicle.a_max)
        assert v_peak == pytest.approx(math.sqrt(L * vehicle.a_max))
        assert t == pytest.approx(2.0 * math.sqrt(L / vehicle.a_max))

    def test_zero_length(self, vehicle):
        assert trapezoid_timing(0.0, vehicle.v_max, vehicle.a_max) == (0.0, 0.0)


class TestProfile:
    def test_straight_ten_meters(self, vehicle):
        traj = profile(straight_path(10.0), vehicle, 120, 47.6)
        assert len(traj) == 120
        assert traj.dt == pytest.approx(47.6 / 119)
        # motion time quantizes up to 14 grid intervals (5.6 s); the peak of
        # the stretched trapezoid drops accordingly but never exceeds v_max
        t_min, v_ideal = trapezoid_timing(10.0, vehicle.v_max, vehicle.a_max)
        assert t_min == pytest.approx(5.25)
        peak = abs(traj.states[:, 3]).max()
        assert peak <= vehicle.v_max + 1e-9
        assert peak == pytest.approx(2.2295, abs=1e-3)
        assert traj.states[0, 3] == 0.0 and traj.states[-1, 3] == 0.0

    def test_arc_length_audit(self, vehicle):
        for length in (8.0, 15.0, 25.0):
            traj = profile(straight_path(length), vehicle, 120, 47.6)
            v = np.abs(traj.states[:, 3])
            integrated = float(np.sum((v[:-1] + v[1:]) / 2.0) * traj.dt)
            assert integrated == pytest.approx(length, rel=0.01)

    def test_limits_respected(self, vehicle):
        traj = profile(straight_path(20.0), vehicle, 120, 47.6)
        assert np.abs(traj.states[:, 3]).max() <= vehicle.v_max
        a_fd = np.diff(traj.states[:, 3]) / traj.dt
        assert np.abs(a_fd).max() <= vehicle.a_max + 1e-6
        w_fd = np.diff(traj.states[:, 4]) / traj.dt
        assert np.abs(w_fd).max() <= vehicle.w_max + 1e-6

    def test_single_point_holds(self, vehicle):
        traj = profile([PathPoint(Pose2(3.0, 2.0, 0.5), 1)], vehicle, 40, 15.6)
        assert np.allclose(traj.states[:, 0], 3.0)
        assert np.allclose(traj.states[:, 3], 0.0)
        assert np.allclose(traj.controls, 0.0)

    def test_empty_path_raises(self, vehicle):
        with pytest.raises(EmptyPathError):
            profile([], vehicle, 40, 15.6)

    def test_infeasible_time(self, vehicle):
        with pytest.raises(InfeasibleTimeError):
            profile(straight_path(100.0), vehicle, 40, 10.0)

    def test_direction_switch_at_zero_speed(self, vehicle):
        fwd = [PathPoint(Pose2(x, 0.0, 0.0), 1) for x in np.linspace(0, 8, 30)]
        rev = [PathPoint(Pose2(8 - s, 0.0, 0.0), -1) for s in np.linspace(0.3, 5, 18)]
        traj = profile(fwd + rev, vehicle, 120, 47.6)
        v = traj.states[:, 3]
        for k in range(len(v) - 1):
            if v[k] > 1e-9 and v[k + 1] < -1e-9 or v[k] < -1e-9 and v[k + 1] > 1e-9:
                pytest.fail(f"direction switch between samples {k} and {k+1} without v=0")
        assert v.min() < -1e-3  # the reverse run is actually driven

    def test_uniform_strictly_increasing_times(self, vehicle):
        traj = profile(straight_path(5.0), vehicle, 60, 23.6)
        t = traj.times
        assert np.all(np.diff(t) > 0)
        assert np.allclose(np.diff(t), traj.dt)

    def test_end_controls_zero(self, vehicle):
        traj = profile(straight_path(12.0), vehicle, 120, 47.6)
        assert traj.controls[0, 0] == 0.0 and traj.controls[0, 1] == 0.0
        assert traj.controls[-1, 0] == 0.0 and traj.controls[-1, 1] == 0.0
