"""End-to-end planning flows: stage-1 generators, OCP solve, and the audit.

The audit is deliberately independent of the solver: it re-evaluates boundary
rows, Euler defects, and physical limits directly, and checks collisions with
the exact polygon-overlap oracle rather than the transcription's fan-gap
constraints.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import hybrid_astar, rrt_star
from .config import RunConfig
from .errors import TrajplanError
from .geometry import Polygon, normalize_angle, polygons_intersect
from .gnn import TrajectoryNet, interpolate_to_grid
from .ocp import NlpProblem, build_nlp, layout, unlayout
from .solver import SolveReport, solve
from .speed_profile import profile
from .trajectory import TimedTrajectory, hold_at
from .vehicle import VehicleParams
from .world import PlanningTask, TaskMap, _pose_corners

logger = logging.getLogger(__name__)

METHODS = ("gnn-ocp", "hybrid-astar-ocp", "rrt-star-ocp")


@dataclass
class AuditReport:
    boundary_max: float
    defect_max: float
    limit_max_excess: float
    bounds_max_excess: float
    collisions: int
    ok: bool

    def summary(self) -> str:
        return (
            f"boundary={self.boundary_max:.2e} defects={self.defect_max:.2e} "
            f"limits+{self.limit_max_excess:.2e} collisions={self.collisions} ok={self.ok}"
        )


@dataclass
class PlanOutcome:
    method: str
    stage1: TimedTrajectory | None
    final: TimedTrajectory | None
    report: SolveReport | None
    audit: AuditReport | None
    stage1_time: float
    opt_time: float
    fallback_used: bool = False
    error: str | None = None

    @property
    def converged(self) -> bool:
        return self.report is not None and self.report.converged


# ---------------------------------------------------------------------------
# Stage-1 initial trajectories
# ---------------------------------------------------------------------------

def hybrid_stage1(task_map: TaskMap, task: PlanningTask, cfg: RunConfig) -> TimedTrajectory:
    path = hybrid_astar.plan_path(
        task_map, task.start, task.goal, cfg.grid, cfg.vehicle,
        node_budget=cfg.astar.node_budget,
        reverse_penalty=cfg.astar.reverse_penalty,
        switch_penalty=cfg.astar.switch_penalty,
        steer_change_penalty=cfg.astar.steer_change_penalty,
        heuristic_weight=cfg.astar.heuristic_weight,
    )
    if not path:
        return hold_at(task.start, cfg.ocp.n_nodes, cfg.ocp.dt)
    return profile(hybrid_astar.path_as_points(path), cfg.vehicle, cfg.ocp.n_nodes, cfg.ocp.t_final)


def rrt_stage1(task_map: TaskMap, task: PlanningTask, cfg: RunConfig) -> TimedTrajectory:
    polyline = rrt_star.plan_path(
        task_map, (task.start.x, task.start.y), (task.goal.x, task.goal.y), cfg.rrt, cfg.vehicle
    )
    poses = rrt_star.dress_path(polyline)
    points = [hybrid_astar.PathPoint(p, 1) for p in poses]
    return profile(points, cfg.vehicle, cfg.ocp.n_nodes, cfg.ocp.t_final)


def gnn_stage1(net: TrajectoryNet, task_map: TaskMap, task: PlanningTask, cfg: RunConfig) -> TimedTrajectory:
    pred = net.predict(task, task_map)
    traj = interpolate_to_grid(pred, cfg.ocp.n_nodes, cfg.ocp.t_final)
    traj.controls[:, 0] = np.clip(traj.controls[:, 0], -cfg.vehicle.a_max, cfg.vehicle.a_max)
    traj.controls[:, 1] = np.clip(traj.controls[:, 1], -cfg.vehicle.w_max, cfg.vehicle.w_max)
    return traj


def straight_line_trajectory(task: PlanningTask, cfg: RunConfig) -> TimedTrajectory:
    """Obstacle-blind naive init: linear position/heading ramp at constant speed."""
    p = cfg.ocp.n_nodes
    t = np.linspace(0.0, 1.0, p)[:, None]
    a = np.array([task.start.x, task.start.y])
    b = np.array([task.goal.x, task.goal.y])
    states = np.zeros((p, 5))
    states[:, 0:2] = a + t * (b - a)
    dth = normalize_angle(task.goal.theta - task.start.theta)
    states[:, 2] = task.start.theta + t[:, 0] * dth
    dist = float(np.hypot(*(b - a)))
    states[:, 3] = dist / cfg.ocp.t_final
    controls = np.zeros((p, 2))
    return TimedTrajectory(cfg.ocp.dt, states, controls)


# ---------------------------------------------------------------------------
# Solve + audit
# ---------------------------------------------------------------------------

def solve_task(
    task_map: TaskMap,
    task: PlanningTask,
    init: TimedTrajectory,
    cfg: RunConfig,
    problem: NlpProblem | None = None,
) -> tuple[TimedTrajectory, SolveReport, NlpProblem]:
    if problem is None:
        problem = build_nlp(task_map, task, cfg.ocp, cfg.vehicle)
    z0 = layout(init, cfg.ocp)
    z_star, report = solve(problem, z0, cfg.solver)
    return unlayout(z_star, cfg.ocp), report, problem


def audit_solution(
    task_map: TaskMap, task: PlanningTask, traj: TimedTrajectory, cfg: RunConfig
) -> AuditReport:
    """Independent feasibility audit of a final trajectory."""
    params = cfg.vehicle
    states, controls = traj.states, traj.controls

    s, g = task.start, task.goal
    boundary = np.concatenate([
        states[0] - np.array([s.x, s.y, s.theta, 0.0, 0.0]),
        states[-1] - np.array([g.x, g.y, g.theta, 0.0, 0.0]),
        controls[0],
        controls[-1],
    ])
    boundary[2] = normalize_angle(boundary[2])  # headings compare on the circle
    boundary[7] = normalize_angle(boundary[7])
    boundary_max = float(np.max(np.abs(boundary)))

    dt = traj.dt
    th, v, phi = states[:-1, 2], states[:-1, 3], states[:-1, 4]
    f = np.stack([
        v * np.cos(th),
        v * np.sin(th),
        v * np.tan(phi) / params.wheelbase,
        controls[:-1, 0],
        controls[:-1, 1],
    ], axis=1)
    defect_max = float(np.max(np.abs(states[1:] - states[:-1] - dt * f)))

    limit_excess = max(
        float(np.max(np.abs(states[:, 3]))) - params.v_max,
        float(np.max(np.abs(states[:, 4]))) - params.phi_max,
        float(np.max(np.abs(controls[:, 0]))) - params.a_max,
        float(np.max(np.abs(controls[:, 1]))) - params.w_max,
    )
    bounds_excess = max(0.0, limit_excess)

    collisions = 0
    corners = _pose_corners(states[:, :3], params)
    for k in range(len(states)):
        fp = Polygon(corners[k])
        if any(polygons_intersect(fp, obs) for obs in task_map.obstacles):
            collisions += 1

    ok = (
        boundary_max < 1e-4
        and defect_max < 1e-4
        and limit_excess <= 1e-9
        and collisions == 0
    )
    return AuditReport(boundary_max, defect_max, max(0.0, limit_excess), bounds_excess, collisions, ok)


# ---------------------------------------------------------------------------
# Full per-task flow with the online fallback
# ---------------------------------------------------------------------------

def plan_task(
    task_map: TaskMap,
    task: PlanningTask,
    method: str,
    cfg: RunConfig,
    net: TrajectoryNet | None = None,
) -> PlanOutcome:
    """Run stage 1 for `method`, optimize, and audit.

    For gnn-ocp a failed optimization triggers one retry seeded by the
    rule-based planner (search + speed profile) before giving up.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    t0 = time.perf_counter()
    try:
        if method == "gnn-ocp":
            if net is None:
                raise TrajplanError("gnn-ocp requires trained weights")
            stage1 = gnn_stage1(net, task_map, task, cfg)
        elif method == "hybrid-astar-ocp":
            stage1 = hybrid_stage1(task_map, task, cfg)
        else:
            stage1 = rrt_stage1(task_map, task, cfg)
    except TrajplanError as e:
        return PlanOutcome(method, None, None, None, None, time.perf_counter() - t0, 0.0, error=str(e))
    stage1_time = time.perf_counter() - t0

    t1 = time.perf_counter()
    final, report, problem = solve_task(task_map, task, stage1, cfg)
    fallback_used = False
    if not report.converged and method == "gnn-ocp":
        logger.info("gnn-ocp failed to converge (%s); falling back to the rule-based pipeline", report.status)
        fallback_used = True
        try:
            fallback_init = hybrid_stage1(task_map, task, cfg)
            final, report, _ = solve_task(task_map, task, fallback_init, cfg, problem)
        except TrajplanError as e:
            opt_time = time.perf_counter() - t1
            return PlanOutcome(
                method, stage1, None, report, None, stage1_time, opt_time,
                fallback_used=True, error=f"fallback stage 1 failed: {e}",
            )
    opt_time = time.perf_counter() - t1

    audit = audit_solution(task_map, task, final, cfg) if report.converged else None
    error = None if report.converged else f"optimization {report.status}"
    return PlanOutcome(method, stage1, final, report, audit, stage1_time, opt_time, fallback_used, error)


def gap_curves(stage1: TimedTrajectory, final: TimedTrajectory) -> dict[str, np.ndarray]:
    """Cumulative per-node distance between the stage-1 guess and the optimum."""
    d_pos = np.hypot(*(stage1.states[:, :2] - final.states[:, :2]).T)
    d_th = np.abs([normalize_angle(d) for d in stage1.states[:, 2] - final.states[:, 2]])
    d_v = np.abs(stage1.states[:, 3] - final.states[:, 3])
    d_phi = np.abs(stage1.states[:, 4] - final.states[:, 4])
    return {
        "position": np.cumsum(d_pos),
        "theta": np.cumsum(d_th),
        "v": np.cumsum(d_v),
        "phi": np.cumsum(d_phi),
    }
