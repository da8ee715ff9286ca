"""Benchmark harness: per-task method comparison with init-gap analysis.

For every task the three pipelines (learned, search-based, sampling-based)
run stage 1, optimize, and get audited; a warm-start study additionally
re-solves the same NLP from a naive straight-line vector under identical
solver settings.  Rows, per-node gap curves, and the warm-start table land in
CSV files; times are wall-clock and everything else is deterministic.
"""

from __future__ import annotations

import csv
import json
import logging
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import pipeline
from .config import RunConfig
from .dataset import sample_tasks
from .errors import TrajplanError
from .gnn import TrajectoryNet
from .ocp import build_nlp, layout, unlayout
from .solver import solve
from .world import PlanningTask, TaskMap

logger = logging.getLogger(__name__)


@dataclass
class BenchmarkRow:
    case_id: str
    method: str
    stage1_time: float
    opt_time: float
    total_time: float
    outer_iters: int
    inner_iters: int
    converged: bool
    fallback_used: bool
    audit_ok: bool
    objective: float
    feasibility: float
    gap_position: float
    gap_theta: float
    gap_v: float
    gap_phi: float
    error: str = ""


@dataclass
class WarmStartRow:
    case_id: str
    candidate: str
    outer_iters: int
    inner_iters: int
    converged: bool
    objective: float
    feasibility: float


@dataclass
class BenchmarkResult:
    rows: list[BenchmarkRow]
    warm_rows: list[WarmStartRow]
    gap_curves: list[dict]  # {case_id, method, curves: {name: list}}
    summary: dict


def _bench_one(args) -> tuple[list[BenchmarkRow], list[WarmStartRow], list[dict]]:
    task_map, task, case_id, methods, cfg, weights_path, with_warm_start = args
    net = TrajectoryNet.load(weights_path, params_v=cfg.vehicle) if weights_path else None
    problem = build_nlp(task_map, task, cfg.ocp, cfg.vehicle)
    rows: list[BenchmarkRow] = []
    warm_rows: list[WarmStartRow] = []
    curves: list[dict] = []

    gnn_z0 = None
    for method in methods:
        t0 = time.perf_counter()
        stage1 = None
        try:
            if method == "gnn-ocp":
                stage1 = pipeline.gnn_stage1(net, task_map, task, cfg)
            elif method == "hybrid-astar-ocp":
                stage1 = pipeline.hybrid_stage1(task_map, task, cfg)
            elif method == "rrt-star-ocp":
                stage1 = pipeline.rrt_stage1(task_map, task, cfg)
            else:
                raise ValueError(f"unknown method {method}")
        except TrajplanError as e:
            stage1_time = time.perf_counter() - t0
            rows.append(BenchmarkRow(case_id, method, stage1_time, 0.0, stage1_time,
                                     0, 0, False, False, False, float("nan"), float("nan"),
                                     float("nan"), float("nan"), float("nan"), float("nan"),
                                     error=f"stage1: {e}"))
            continue
        stage1_time = time.perf_counter() - t0

        t1 = time.perf_counter()
        z0 = layout(stage1, cfg.ocp)
        if method == "gnn-ocp":
            gnn_z0 = z0
        z_star, report = solve(problem, z0, cfg.solver)
        fallback_used = False
        if method == "gnn-ocp" and not report.converged:
            fallback_used = True
            try:
                fb = pipeline.hybrid_stage1(task_map, task, cfg)
                z_star, report = solve(problem, layout(fb, cfg.ocp), cfg.solver)
            except TrajplanError as e:
                logger.info("%s fallback stage 1 failed: %s", case_id, e)
        opt_time = time.perf_counter() - t1

        final = unlayout(z_star, cfg.ocp)
        audit = pipeline.audit_solution(task_map, task, final, cfg) if report.converged else None
        gaps = pipeline.gap_curves(stage1, final)
        rows.append(BenchmarkRow(
            case_id, method, stage1_time, opt_time, stage1_time + opt_time,
            report.outer_iters, report.inner_iters, report.converged, fallback_used,
            bool(audit and audit.ok), report.objective, report.feasibility,
            float(gaps["position"][-1]), float(gaps["theta"][-1]),
            float(gaps["v"][-1]), float(gaps["phi"][-1]),
            error="" if report.converged else report.status,
        ))
        curves.append({"case_id": case_id, "method": method,
                       "curves": {k: v.tolist() for k, v in gaps.items()}})

    if with_warm_start and gnn_z0 is not None:
        sl = pipeline.straight_line_trajectory(task, cfg)
        for name, z0 in (("gnn", gnn_z0), ("straight-line", layout(sl, cfg.ocp))):
            _, rep = solve(problem, z0, cfg.solver)
            warm_rows.append(WarmStartRow(case_id, name, rep.outer_iters, rep.inner_iters,
                                          rep.converged, rep.objective, rep.feasibility))
    return rows, warm_rows, curves


def run_benchmark(
    maps: list[TaskMap],
    cfg: RunConfig,
    weights_path,
    methods: tuple[str, ...] = pipeline.METHODS,
    tasks_per_map: int = 2,
    seed: int = 0,
    jobs: int = 1,
    with_warm_start: bool = True,
    tasks: list[tuple[TaskMap, PlanningTask]] | None = None,
) -> BenchmarkResult:
    """Benchmark every method on tasks_per_map sampled tasks per map.

    gnn-ocp requires weights_path.  Results keep task order regardless of
    jobs, so all non-time columns are reproducible for a fixed seed.
    """
    if "gnn-ocp" in methods and not weights_path:
        raise ValueError("gnn-ocp benchmarking needs trained weights")
    work = []
    if tasks is None:
        tasks = []
        for m in maps:
            for t in sample_tasks(m, tasks_per_map, seed, cfg.vehicle,
                                  min_clearance=cfg.dataset.min_clearance,
                                  min_separation=cfg.dataset.min_separation):
                tasks.append((m, t))
    for i, (m, t) in enumerate(tasks):
        work.append((m, t, f"{m.map_id}#t{i:03d}", methods, cfg, weights_path, with_warm_start))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_bench_one, work, chunksize=1))
    else:
        results = [_bench_one(w) for w in work]

    rows: list[BenchmarkRow] = []
    warm_rows: list[WarmStartRow] = []
    curves: list[dict] = []
    for r, w, g in results:
        rows.extend(r)
        warm_rows.extend(w)
        curves.extend(g)
    return BenchmarkResult(rows, warm_rows, curves, summarize(rows, warm_rows))


def summarize(rows: list[BenchmarkRow], warm_rows: list[WarmStartRow]) -> dict:
    summary: dict = {"methods": {}, "warm_start": {}}
    for method in sorted({r.method for r in rows}):
        sub = [r for r in rows if r.method == method]
        conv = [r for r in sub if r.converged]
        summary["methods"][method] = {
            "tasks": len(sub),
            "converged": len(conv),
            "convergence_rate": len(conv) / len(sub) if sub else 0.0,
            "audit_pass_rate": (sum(r.audit_ok for r in conv) / len(conv)) if conv else 0.0,
            "mean_stage1_time": statistics.fmean(r.stage1_time for r in sub) if sub else 0.0,
            "mean_opt_time": statistics.fmean(r.opt_time for r in sub) if sub else 0.0,
            "mean_total_time": statistics.fmean(r.total_time for r in sub) if sub else 0.0,
            "median_inner_iters": statistics.median(r.inner_iters for r in sub) if sub else 0,
            "mean_gap_position": statistics.fmean(r.gap_position for r in conv) if conv else float("nan"),
            "mean_gap_theta": statistics.fmean(r.gap_theta for r in conv) if conv else float("nan"),
            "mean_gap_v": statistics.fmean(r.gap_v for r in conv) if conv else float("nan"),
            "mean_gap_phi": statistics.fmean(r.gap_phi for r in conv) if conv else float("nan"),
        }
    for cand in sorted({w.candidate for w in warm_rows}):
        sub = [w for w in warm_rows if w.candidate == cand]
        summary["warm_start"][cand] = {
            "tasks": len(sub),
            "median_inner_iters": statistics.median(w.inner_iters for w in sub) if sub else 0,
            "convergence_rate": (sum(w.converged for w in sub) / len(sub)) if sub else 0.0,
        }
    return summary


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def write_rows_csv(rows: list[BenchmarkRow], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([
            "case_id", "method", "stage1_time_s", "opt_time_s", "total_time_s",
            "outer_iters", "inner_iters", "converged", "fallback_used", "audit_ok",
            "objective", "feasibility", "gap_position", "gap_theta", "gap_v", "gap_phi", "error",
        ])
        for r in rows:
            w.writerow([
                r.case_id, r.method, f"{r.stage1_time:.6f}", f"{r.opt_time:.6f}",
                f"{r.total_time:.6f}", r.outer_iters, r.inner_iters, int(r.converged),
                int(r.fallback_used), int(r.audit_ok), repr(r.objective), repr(r.feasibility),
                repr(r.gap_position), repr(r.gap_theta), repr(r.gap_v), repr(r.gap_phi), r.error,
            ])


def write_gaps_csv(curves: list[dict], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["case_id", "method", "node", "cum_position", "cum_theta", "cum_v", "cum_phi"])
        for entry in curves:
            c = entry["curves"]
            for k in range(len(c["position"])):
                w.writerow([
                    entry["case_id"], entry["method"], k,
                    repr(c["position"][k]), repr(c["theta"][k]), repr(c["v"][k]), repr(c["phi"][k]),
                ])


def write_warm_csv(warm_rows: list[WarmStartRow], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["case_id", "candidate", "outer_iters", "inner_iters", "converged",
                    "objective", "feasibility"])
        for r in warm_rows:
            w.writerow([r.case_id, r.candidate, r.outer_iters, r.inner_iters, int(r.converged),
                        repr(r.objective), repr(r.feasibility)])


def write_summary_json(summary: dict, path) -> None:
    with open(path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
