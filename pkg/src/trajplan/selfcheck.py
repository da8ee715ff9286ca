"""Standing numerical self-checks: gradient suites, geometry oracles, solver fixtures.

Used by the CLI `selfcheck` subcommand and the CI suite.  Every gradient in
the transcription and every autodiff primitive is compared against central
finite differences; the fan-gap containment test is cross-checked against
ray casting; the solver must hit three hand-derived optima.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import autodiff as ad
from .geometry import Polygon, Pose2, point_in_polygon_raycast, triangle_gap
from .ocp import (
    NlpProblem,
    OcpConfig,
    boundary_constraints,
    build_nlp,
    cost,
    dynamics_defects,
    obstacle_constraints,
)
from .solver import SolveOptions, solve
from .vehicle import VehicleParams
from .world import PlanningTask, TaskMap

GRAD_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    passed: bool
    metric: float  # max relative error, mismatch count, etc.
    detail: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.name}: {self.detail or f'max rel err {self.metric:.3e}'}"


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def _fd_grad(f, z: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(z)
    for i in range(len(z)):
        zp = z.copy()
        zp[i] += h
        zm = z.copy()
        zm[i] -= h
        g[i] = (f(zp) - f(zm)) / (2.0 * h)
    return g


def _fd_jac(f, z: np.ndarray, m: int, h: float = 1e-6) -> np.ndarray:
    J = np.zeros((m, len(z)))
    for i in range(len(z)):
        zp = z.copy()
        zp[i] += h
        zm = z.copy()
        zm[i] -= h
        J[:, i] = (f(zp) - f(zm)) / (2.0 * h)
    return J


def _test_fixture() -> tuple[TaskMap, PlanningTask, OcpConfig, VehicleParams]:
    m = TaskMap((0.0, 0.0, 30.0, 30.0), [
        Polygon(np.array([[10.0, 10.0], [14.0, 10.0], [14.0, 13.0], [10.0, 13.0]])),
        Polygon(np.array([[20.0, 4.0], [22.0, 3.0], [23.0, 6.0], [21.0, 8.0], [19.0, 6.0]])),
    ]).validate()
    task = PlanningTask(Pose2(2.0, 2.0, 0.1), Pose2(8.0, 6.0, 0.4))
    return m, task, OcpConfig(n_nodes=10, t_final=3.6), VehicleParams()


def _random_states(cfg: OcpConfig, rng: np.random.Generator, n_points: int = 20) -> list[np.ndarray]:
    """Random decision vectors away from constraint kinks (strictly feasible margins)."""
    out = []
    for _ in range(n_points):
        z = rng.normal(0.0, 0.3, cfg.n_vars).reshape(cfg.n_nodes, 7)
        z[:, 0] = np.linspace(2.0, 8.0, cfg.n_nodes) + rng.normal(0, 0.3, cfg.n_nodes)
        z[:, 1] = np.linspace(2.0, 6.0, cfg.n_nodes) + rng.normal(0, 0.3, cfg.n_nodes)
        z[:, 4] = rng.uniform(-0.6, 0.6, cfg.n_nodes)
        out.append(z.ravel())
    return out


def check_ocp_gradients(n_points: int = 20, seed: int = 0, fault: float = 0.0) -> list[CheckResult]:
    """Cost/constraint gradients vs central differences at random feasible points."""
    task_map, task, cfg, params = _test_fixture()
    rng = np.random.default_rng(seed)
    worst = {"cost": 0.0, "defects": 0.0, "boundary": 0.0, "obstacles": 0.0}
    for z in _random_states(cfg, rng, n_points):
        _, grad = cost(z, cfg, task_map)
        grad = grad + fault
        worst["cost"] = max(worst["cost"], _rel_err(grad, _fd_grad(lambda zz: cost(zz, cfg, task_map)[0], z)))

        vals, jac = dynamics_defects(z, cfg, params)
        num = _fd_jac(lambda zz: dynamics_defects(zz, cfg, params)[0], z, len(vals))
        worst["defects"] = max(worst["defects"], _rel_err(jac.toarray() + fault, num))

        vals, jac = boundary_constraints(z, task, cfg)
        num = _fd_jac(lambda zz: boundary_constraints(zz, task, cfg)[0], z, len(vals))
        worst["boundary"] = max(worst["boundary"], _rel_err(jac.toarray() + fault, num))

        vals, jac = obstacle_constraints(z, task_map, params, cfg)
        num = _fd_jac(lambda zz: obstacle_constraints(zz, task_map, params, cfg)[0], z, len(vals))
        worst["obstacles"] = max(worst["obstacles"], _rel_err(jac.toarray() + fault, num))
    return [
        CheckResult(f"ocp/{name}-gradient", err < GRAD_TOL, err) for name, err in worst.items()
    ]


def check_autodiff(seed: int = 0, fault: float = 0.0) -> list[CheckResult]:
    """Finite-difference check of every autodiff primitive on random tensors."""
    rng = np.random.default_rng(seed)
    results = []
    targets = {
        "linear": lambda x, w, b: ad.mse(ad.linear(x, w, b), np.zeros((4, 5))),
        "relu": lambda x: ad.mse(ad.relu(x), np.zeros((4, 3))),
        "concat": lambda a, b: ad.mse(ad.concat([a, b], axis=1), np.zeros((4, 7))),
        "max_pool": lambda x: ad.mse(ad.tile_rows(ad.max_over_rows(x), 4), np.ones((4, 3))),
        "mean_pool": lambda x: ad.mse(ad.tile_rows(ad.mean_over_rows(x), 4), np.ones((4, 3))),
        "mse": lambda x: ad.mse(x, np.ones((4, 3))),
    }
    inputs = {
        "linear": [ad.Tensor(rng.normal(0, 1, (4, 3))), ad.Tensor(rng.normal(0, 1, (3, 5))), ad.Tensor(rng.normal(0, 1, 5))],
        "relu": [ad.Tensor(rng.normal(0, 1, (4, 3)))],
        "concat": [ad.Tensor(rng.normal(0, 1, (4, 3))), ad.Tensor(rng.normal(0, 1, (4, 4)))],
        "max_pool": [ad.Tensor(rng.normal(0, 1, (4, 3)))],
        "mean_pool": [ad.Tensor(rng.normal(0, 1, (4, 3)))],
        "mse": [ad.Tensor(rng.normal(0, 1, (4, 3)))],
    }
    for name, fn in targets.items():
        err = ad.finite_difference_check(fn, inputs[name]) + fault
        results.append(CheckResult(f"autodiff/{name}", err < GRAD_TOL, err))
    return results


def check_geometry_oracle(n_samples: int = 10_000, seed: int = 0) -> list[CheckResult]:
    """Fan-gap sign classification vs ray casting on random convex polygons."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    tested = 0
    while tested < n_samples:
        n = int(rng.integers(3, 9))
        angles = np.sort(rng.uniform(0, 2 * math.pi, n))
        if np.min(np.diff(angles)) < 1e-3:
            continue
        radii = rng.uniform(0.5, 3.0, n)
        poly = Polygon(np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1))
        from .geometry import is_convex

        if not is_convex(poly):
            continue
        p = rng.uniform(-4, 4, 2)
        gap = triangle_gap(p, poly)
        if abs(gap) < 1e-9:  # boundary band excluded
            continue
        inside_gap = gap <= 0.0
        inside_ray = point_in_polygon_raycast(p, poly)
        if inside_gap != inside_ray:
            mismatches += 1
        tested += 1
    return [CheckResult("geometry/fan-gap-vs-raycast", mismatches == 0, float(mismatches),
                        detail=f"{mismatches} disagreements in {tested} samples")]


def check_solver_fixtures() -> list[CheckResult]:
    """Three analytic optima the solver must reproduce within 1e-4."""
    results = []
    c = np.array([1.0, -2.0, 3.0])
    prob = NlpProblem(3, lambda z: (float((z - c) @ (z - c)), 2 * (z - c)))
    z, rep = solve(prob, np.array([5.0, 5.0, 5.0]))
    err = float(np.max(np.abs(z - c)))
    results.append(CheckResult("solver/unconstrained-quadratic", rep.converged and err < 1e-6, err))

    def eq(z):
        return np.array([z[0] + z[1] - 1.0]), sparse.csr_matrix(np.array([[1.0, 1.0]]))

    prob2 = NlpProblem(2, lambda z: (float(z @ z), 2 * z), eq=eq)
    z2, rep2 = solve(prob2, np.array([3.0, -2.0]))
    err2 = float(np.max(np.abs(z2 - 0.5)))
    results.append(CheckResult("solver/equality-constrained", rep2.converged and err2 < 1e-4, err2))

    def ineq(z):
        return np.array([z[0]]), sparse.csr_matrix(np.array([[1.0]]))

    prob3 = NlpProblem(1, lambda z: (float((z[0] + 1.0) ** 2), np.array([2 * (z[0] + 1.0)])), ineq=ineq)
    z3, rep3 = solve(prob3, np.array([2.0]))
    err3 = abs(float(z3[0]))
    results.append(CheckResult("solver/inequality-active", rep3.converged and err3 < 1e-4, err3))
    return results


def run_selfcheck(quick: bool = False, inject_gradient_fault: bool = False) -> list[CheckResult]:
    """All suites; inject_gradient_fault is a test hook proving faults are caught."""
    fault = 1e-2 if inject_gradient_fault else 0.0
    n_grad = 5 if quick else 20
    n_geo = 2000 if quick else 10_000
    results = []
    results += check_autodiff(fault=fault)
    results += check_ocp_gradients(n_points=n_grad, fault=fault)
    results += check_geometry_oracle(n_samples=n_geo)
    results += check_solver_fixtures()
    return results
