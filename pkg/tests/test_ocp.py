import math

import numpy as np
import pytest

from trajplan.errors import InvalidSteeringError
from trajplan.geometry import Polygon, Pose2
from trajplan.ocp import (
    N_BOUNDARY_ROWS,
    OcpConfig,
    boundary_constraints,
    box_bounds,
    build_nlp,
    cost,
    dynamics_defects,
    layout,
    obstacle_constraints,
    unlayout,
)
from trajplan.trajectory import TimedTrajectory
from trajplan.vehicle import Control, VehicleParams, VehicleState, integrate_euler
from trajplan.world import PlanningTask, TaskMap


@pytest.fixture(scope="module")
def fixture_map():
    return TaskMap((0.0, 0.0, 30.0, 30.0), [
        Polygon(np.array([[10.0, 10.0], [14.0, 10.0], [14.0, 13.0], [10.0, 13.0]])),
        Polygon(np.array([[20.0, 4.0], [22.0, 3.0], [23.0, 6.0], [21.0, 8.0], [19.0, 6.0]])),
    ]).validate()


@pytest.fixture(scope="module")
def cfg():
    return OcpConfig(n_nodes=12, t_final=4.4)


@pytest.fixture(scope="module")
def task():
    return PlanningTask(Pose2(2.0, 2.0, 0.1), Pose2(8.0, 6.0, 0.4))


def random_z(cfg, seed=42):
    rng = np.random.default_rng(seed)
    z = rng.normal(0, 0.3, cfg.n_vars).reshape(cfg.n_nodes, 7)
    z[:, 0] = np.linspace(2, 8, cfg.n_nodes) + rng.normal(0, 0.2, cfg.n_nodes)
    z[:, 1] = np.linspace(2, 6, cfg.n_nodes) + rng.normal(0, 0.2, cfg.n_nodes)
    z[:, 4] = rng.uniform(-0.6, 0.6, cfg.n_nodes)
    return z.ravel()


def fd_grad(f, z, h=1e-6):
    g = np.zeros_like(z)
    for i in range(len(z)):
        zp = z.copy(); zp[i] += h
        zm = z.copy(); zm[i] -= h
        g[i] = (f(zp) - f(zm)) / (2 * h)
    return g


def fd_jac(f, z, m, h=1e-6):
    J = np.zeros((m, len(z)))
    for i in range(len(z)):
        zp = z.copy(); zp[i] += h
        zm = z.copy(); zm[i] -= h
        J[:, i] = (f(zp) - f(zm)) / (2 * h)
    return J


def rel_err(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))))


class TestLayout:
    def test_default_var_count_is_840(self):
        assert OcpConfig().n_vars == 840

    def test_round_trip_bit_exact(self, cfg):
        rng = np.random.default_rng(7)
        traj = TimedTrajectory(cfg.dt, rng.normal(0, 1, (cfg.n_nodes, 5)), rng.normal(0, 1, (cfg.n_nodes, 2)))
        z = layout(traj, cfg)
        back = unlayout(z, cfg)
        assert np.array_equal(back.states, traj.states)
        assert np.array_equal(back.controls, traj.controls)

    def test_theta_index_arithmetic(self, cfg):
        traj = TimedTrajectory(cfg.dt, np.zeros((cfg.n_nodes, 5)), np.zeros((cfg.n_nodes, 2)))
        traj.states[3, 2] = 9.5
        z = layout(traj, cfg)
        assert z[3 * 7 + 2] == 9.5

    def test_sample_count_mismatch(self, cfg):
        traj = TimedTrajectory(cfg.dt, np.zeros((cfg.n_nodes + 1, 5)), np.zeros((cfg.n_nodes + 1, 2)))
        with pytest.raises(ValueError):
            layout(traj, cfg)


class TestCost:
    def test_vanishes_far_from_everything(self, cfg):
        far_map = TaskMap((0, 0, 10000, 10000), [
            Polygon(np.array([[9000.0, 9000], [9010, 9000], [9010, 9010], [9000, 9010]]))
        ])
        z = np.zeros(cfg.n_vars)
        j, _ = cost(z, cfg, far_map)
        assert j < 1e-12

    def test_single_node_at_centroid(self, fixture_map):
        one = OcpConfig(n_nodes=2, t_final=0.4, lambda1=0.0, lambda2=1.0)
        z = np.zeros(one.n_vars).reshape(2, 7)
        c0 = fixture_map.centroids()[0]
        z[0, 0:2] = c0
        z[1, 0:2] = [1000.0, 1000.0]
        j, _ = cost(z.ravel(), one, fixture_map)
        # gamma^0 = 1 for the node sitting on the centroid, times dt
        assert j == pytest.approx(one.dt * 1.0, rel=1e-6)

    def test_gradient_matches_fd(self, cfg, fixture_map):
        for seed in (1, 2, 3):
            z = random_z(cfg, seed)
            _, g = cost(z, cfg, fixture_map)
            gn = fd_grad(lambda zz: cost(zz, cfg, fixture_map)[0], z)
            assert rel_err(g, gn) < 1e-5

    def test_j1_translation_invariant(self, cfg):
        empty = TaskMap((0, 0, 100, 100), [])
        z = random_z(cfg)
        j0, _ = cost(z, cfg, empty)
        z2 = z.reshape(cfg.n_nodes, 7).copy()
        z2[:, 0] += 5.0
        z2[:, 1] -= 3.0
        j1, _ = cost(z2.ravel(), cfg, empty)
        assert j1 == pytest.approx(j0, rel=1e-12)


class TestDefects:
    def test_zero_on_euler_rollout(self, cfg, vehicle):
        s = VehicleState(Pose2(2, 2, 0.1), 0.0, 0.0)
        states, controls = [s.as_array()], []
        for k in range(cfg.n_nodes - 1):
            u = Control(0.3 * math.sin(k), 0.1 * math.cos(k))
            controls.append([u.a, u.w])
            s = integrate_euler(s, u, cfg.dt, vehicle)
            states.append(s.as_array())
        controls.append([0.0, 0.0])
        z = layout(TimedTrajectory(cfg.dt, np.array(states), np.array(controls)), cfg)
        vals, _ = dynamics_defects(z, cfg, vehicle)
        assert np.abs(vals).max() < 1e-12

    def test_row_count_at_default_nodes(self, vehicle):
        big = OcpConfig()  # 120 nodes
        vals, jac = dynamics_defects(np.zeros(big.n_vars), big, vehicle)
        assert vals.shape == (595,)
        assert jac.shape == (595, 840)

    def test_jacobian_matches_fd(self, cfg, vehicle):
        z = random_z(cfg)
        vals, jac = dynamics_defects(z, cfg, vehicle)
        num = fd_jac(lambda zz: dynamics_defects(zz, cfg, vehicle)[0], z, len(vals))
        assert rel_err(jac.toarray(), num) < 1e-5

    def test_steering_singularity(self, cfg, vehicle):
        z = np.zeros(cfg.n_vars)
        z[4] = math.pi / 2
        with pytest.raises(InvalidSteeringError):
            dynamics_defects(z, cfg, vehicle)


class TestBoundary:
    def test_row_count_is_14(self, cfg, task):
        vals, jac = boundary_constraints(np.zeros(cfg.n_vars), task, cfg)
        assert vals.shape == (N_BOUNDARY_ROWS,) == (14,)
        assert jac.shape == (14, cfg.n_vars)

    def test_exact_on_matching_z(self, cfg, task):
        z = np.zeros(cfg.n_vars).reshape(cfg.n_nodes, 7)
        z[0, 0:3] = [task.start.x, task.start.y, task.start.theta]
        z[-1, 0:3] = [task.goal.x, task.goal.y, task.goal.theta]
        vals, _ = boundary_constraints(z.ravel(), task, cfg)
        assert np.abs(vals).max() < 1e-9

    def test_goal_perturbation_hits_one_row(self, cfg, task):
        z = np.zeros(cfg.n_vars).reshape(cfg.n_nodes, 7)
        z[0, 0:3] = [task.start.x, task.start.y, task.start.theta]
        z[-1, 0:3] = [task.goal.x, task.goal.y, task.goal.theta]
        moved = PlanningTask(task.start, Pose2(task.goal.x + 0.1, task.goal.y, task.goal.theta))
        vals, _ = boundary_constraints(z.ravel(), moved, cfg)
        nonzero = np.flatnonzero(np.abs(vals) > 1e-12)
        assert len(nonzero) == 1
        assert vals[nonzero[0]] == pytest.approx(-0.1)

    def test_heading_rows_wrap(self, cfg, task):
        z = np.zeros(cfg.n_vars).reshape(cfg.n_nodes, 7)
        z[0, 0:3] = [task.start.x, task.start.y, task.start.theta]
        z[-1, 0:3] = [task.goal.x, task.goal.y, task.goal.theta + 2 * math.pi]
        vals, _ = boundary_constraints(z.ravel(), task, cfg)
        assert np.abs(vals).max() < 1e-9


class TestObstacles:
    def test_far_vehicle_all_positive(self, cfg, fixture_map, vehicle):
        z = np.zeros(cfg.n_vars).reshape(cfg.n_nodes, 7)
        z[:, 0] = np.linspace(1, 5, cfg.n_nodes)
        z[:, 1] = 25.0
        vals, _ = obstacle_constraints(z.ravel(), fixture_map, vehicle, cfg)
        assert vals.min() > 1.0

    def test_corner_on_boundary_is_minus_eps(self, cfg, vehicle):
        # place the front-right corner exactly on the obstacle's left edge
        square = TaskMap((0, 0, 30, 30), [
            Polygon(np.array([[10.0, 0.0], [14.0, 0.0], [14.0, 4.0], [10.0, 4.0]]))
        ])
        z = np.zeros(cfg.n_vars).reshape(cfg.n_nodes, 7)
        z[:, 1] = 20.0  # keep the other nodes far away
        z[0, 0] = 10.0 - (vehicle.wheelbase + vehicle.front_hang)
        z[0, 1] = 2.0 + vehicle.width / 2.0  # corner at (10, 2): on the edge
        vals, _ = obstacle_constraints(z.ravel(), square, vehicle, cfg)
        assert vals.min() == pytest.approx(-cfg.eps_clearance, abs=1e-9)

    def test_jacobian_matches_fd_feasible(self, cfg, fixture_map, vehicle):
        z = random_z(cfg)
        vals, jac = obstacle_constraints(z, fixture_map, vehicle, cfg)
        num = fd_jac(lambda zz: obstacle_constraints(zz, fixture_map, vehicle, cfg)[0], z, len(vals))
        assert rel_err(jac.toarray(), num) < 1e-4

    def test_jacobian_matches_fd_penetrating(self, cfg, fixture_map, vehicle):
        z = random_z(cfg).reshape(cfg.n_nodes, 7)
        z[3, 0:2] = [12.0, 11.4]  # deep inside the rectangle
        z[7, 0:2] = [21.0, 5.6]  # inside the pentagon
        z = z.ravel()
        vals, jac = obstacle_constraints(z, fixture_map, vehicle, cfg)
        assert vals.min() < -cfg.eps_clearance  # interior extension is negative
        num = fd_jac(lambda zz: obstacle_constraints(zz, fixture_map, vehicle, cfg)[0], z, len(vals))
        assert rel_err(jac.toarray(), num) < 1e-4

    def test_row_count(self, cfg, fixture_map, vehicle):
        pieces = fixture_map.convex_pieces()
        n_verts = sum(len(p) for p in pieces)
        expected = cfg.n_nodes * (4 * len(pieces) + n_verts)
        vals, _ = obstacle_constraints(np.zeros(cfg.n_vars), fixture_map, vehicle, cfg)
        assert vals.shape == (expected,)


class TestBuildNlp:
    def test_box_bounds(self, cfg, vehicle):
        lo, hi = box_bounds(cfg, vehicle)
        assert lo.shape == hi.shape == (cfg.n_vars,)
        assert lo[3] == -vehicle.v_max and hi[3] == vehicle.v_max
        assert lo[4] == -vehicle.phi_max and hi[6] == vehicle.w_max
        assert np.isinf(lo[0]) and np.isinf(hi[2])

    def test_assembled_problem_consistency(self, cfg, fixture_map, task, vehicle):
        prob = build_nlp(fixture_map, task, cfg, vehicle)
        z = random_z(cfg)
        c, jc = prob.eq(z)
        assert c.shape == (5 * (cfg.n_nodes - 1) + 14,)
        assert jc.shape == (len(c), cfg.n_vars)
        g, jg = prob.ineq(z)
        assert jg.shape == (len(g), cfg.n_vars)
        f, grad = prob.objective(z)
        assert math.isfinite(f) and grad.shape == (cfg.n_vars,)
        # dimensions fixed across calls
        c2, _ = prob.eq(random_z(cfg, 9))
        assert c2.shape == c.shape
