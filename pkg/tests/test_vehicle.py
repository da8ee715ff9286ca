import math

import numpy as np
import pytest

from trajplan.errors import ConfigError, InvalidSteeringError
from trajplan.geometry import Pose2, polygon_area
from trajplan.vehicle import (
    Control,
    VehicleParams,
    VehicleState,
    check_limits,
    derivative,
    derivative_jacobian,
    footprint,
    integrate_euler,
)


def rk4_step(s: VehicleState, u: Control, h: float, p: VehicleParams) -> VehicleState:
    """Independent RK4 oracle for the same dynamics."""

    def f(arr):
        x, y, th, v, phi = arr
        return np.array([v * math.cos(th), v * math.sin(th), v * math.tan(phi) / p.wheelbase, u.a, u.w])

    y0 = s.as_array()
    k1 = f(y0)
    k2 = f(y0 + 0.5 * h * k1)
    k3 = f(y0 + 0.5 * h * k2)
    k4 = f(y0 + h * k3)
    return VehicleState.from_array(y0 + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))


class TestDerivative:
    def test_rest_state_zero(self, vehicle):
        d = derivative(VehicleState(Pose2(3, 4, 1.1), 0.0, 0.3), Control(), vehicle)
        assert np.allclose(d, 0.0)

    def test_straight_line(self, vehicle):
        d = derivative(VehicleState(Pose2(0, 0, 0), 1.0, 0.0), Control(0.5, 0.2), vehicle)
        assert np.allclose(d, [1.0, 0.0, 0.0, 0.5, 0.2])

    def test_max_steer_turn_rate(self, vehicle):
        d = derivative(VehicleState(Pose2(0, 0, 0), 2.5, 0.7), Control(), vehicle)
        expected = 2.5 * math.tan(0.7) / 2.8  # 0.752043...
        assert d[2] == pytest.approx(expected, abs=1e-12)
        assert d[2] == pytest.approx(0.7520, abs=1e-3)

    def test_steering_singularity(self, vehicle):
        with pytest.raises(InvalidSteeringError):
            derivative(VehicleState(Pose2(0, 0, 0), 1.0, math.pi / 2), Control(), vehicle)

    def test_jacobian_matches_finite_differences(self, vehicle):
        rng = np.random.default_rng(0)
        h = 1e-7
        for _ in range(20):
            arr = np.concatenate([rng.uniform(-5, 5, 3), rng.uniform(-2, 2, 1), rng.uniform(-0.6, 0.6, 1), rng.uniform(-1, 1, 2)])
            s = VehicleState(Pose2(arr[0], arr[1], arr[2]), arr[3], arr[4])
            u = Control(arr[5], arr[6])
            J = derivative_jacobian(s, u, vehicle)
            for j in range(7):
                ap = arr.copy(); ap[j] += h
                am = arr.copy(); am[j] -= h
                dp = derivative(VehicleState(Pose2(*ap[:3]), ap[3], ap[4]), Control(ap[5], ap[6]), vehicle)
                dm = derivative(VehicleState(Pose2(*am[:3]), am[3], am[4]), Control(am[5], am[6]), vehicle)
                num = (dp - dm) / (2 * h)
                denom = np.maximum(1.0, np.abs(num))
                assert np.max(np.abs(J[:, j] - num) / denom) < 1e-6


class TestIntegrateEuler:
    def test_rest_unchanged(self, vehicle):
        s = VehicleState(Pose2(1, 2, 0.3), 0.0, 0.0)
        assert integrate_euler(s, Control(), 0.5, vehicle) == s

    def test_straight_advance(self, vehicle):
        s = VehicleState(Pose2(0, 0, 0), 1.0, 0.0)
        out = integrate_euler(s, Control(), 0.5, vehicle)
        assert out.pose.x == pytest.approx(0.5)
        assert out.pose.y == 0.0

    def test_small_step_matches_rk4_oracle(self, vehicle):
        s_e = VehicleState(Pose2(0, 0, 0.2), 1.5, 0.3)
        s_r = s_e
        u = Control(0.4, -0.2)
        h = 1e-3
        for _ in range(100):
            s_e = integrate_euler(s_e, u, h, vehicle)
            s_r = rk4_step(s_r, u, h, vehicle)
        gap = math.hypot(s_e.pose.x - s_r.pose.x, s_e.pose.y - s_r.pose.y)
        assert gap < 1e-3

    def test_rejects_nonpositive_step(self, vehicle):
        with pytest.raises(ValueError):
            integrate_euler(VehicleState(Pose2(0, 0, 0)), Control(), 0.0, vehicle)


class TestFootprint:
    def test_table_dimensions_at_origin(self, vehicle):
        corners = footprint(VehicleState(Pose2(0, 0, 0)), vehicle).vertices
        assert sorted(set(np.round(corners[:, 0], 6))) == [-0.929, 3.76]
        assert sorted(set(np.round(corners[:, 1], 6))) == [-0.95, 0.95]

    def test_quarter_turn_maps_corners(self, vehicle):
        c0 = footprint(VehicleState(Pose2(0, 0, 0)), vehicle).vertices
        c90 = footprint(VehicleState(Pose2(0, 0, math.pi / 2)), vehicle).vertices
        mapped = np.stack([-c0[:, 1], c0[:, 0]], axis=1)
        assert np.allclose(c90, mapped, atol=1e-12)

    def test_area_invariant_over_poses(self, vehicle):
        rng = np.random.default_rng(1)
        expected = (0.929 + 2.8 + 0.96) * 1.9
        for _ in range(100):
            pose = Pose2(*rng.uniform(-20, 20, 2), rng.uniform(-math.pi, math.pi))
            assert polygon_area(footprint(VehicleState(pose), vehicle)) == pytest.approx(expected, abs=1e-9)

    def test_rigid_motion_equivariance(self, vehicle):
        from trajplan.geometry import from_frame_xy

        frame = Pose2(3.0, -2.0, 0.9)
        local = footprint(VehicleState(Pose2(1.0, 0.5, 0.4)), vehicle).vertices
        # footprint(T o s) == T(footprint(s))
        moved_pose = Pose2(
            frame.x + 1.0 * math.cos(frame.theta) - 0.5 * math.sin(frame.theta),
            frame.y + 1.0 * math.sin(frame.theta) + 0.5 * math.cos(frame.theta),
            frame.theta + 0.4,
        )
        direct = footprint(VehicleState(moved_pose), vehicle).vertices
        transformed = from_frame_xy(local, frame)
        assert np.allclose(direct, transformed, atol=1e-9)


class TestCheckLimits:
    def test_all_zero_ok(self, vehicle):
        assert check_limits(VehicleState(Pose2(0, 0, 0)), Control(), vehicle) == []

    def test_velocity_violation_tagged(self, vehicle):
        v = check_limits(VehicleState(Pose2(0, 0, 0), 2.6, 0.0), Control(), vehicle)
        assert len(v) == 1 and v[0][0] == "velocity"

    def test_agrees_with_direct_comparison(self, vehicle):
        rng = np.random.default_rng(2)
        for _ in range(200):
            s = VehicleState(Pose2(0, 0, 0), rng.uniform(-3, 3), rng.uniform(-1, 1))
            u = Control(rng.uniform(-3, 3), rng.uniform(-1.2, 1.2))
            tags = {t for t, _, _ in check_limits(s, u, vehicle)}
            assert ("velocity" in tags) == (abs(s.v) > vehicle.v_max)
            assert ("acceleration" in tags) == (abs(u.a) > vehicle.a_max)
            assert ("steering" in tags) == (abs(s.phi) > vehicle.phi_max)
            assert ("steering_rate" in tags) == (abs(u.w) > vehicle.w_max)


def test_params_validation():
    with pytest.raises(ConfigError):
        VehicleParams(wheelbase=-1.0)
    with pytest.raises(ConfigError):
        VehicleParams(phi_max=1.7)
