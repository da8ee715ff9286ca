"""Command-line entry point.

Subcommands: gen-maps, build-dataset, train, plan, benchmark, selfcheck.
Exit codes: 0 success, 2 planning failure, 3 invalid input, 4 selfcheck failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import bench, dataset, pipeline, svg
from .config import MAP_STYLES, RunConfig, load_config
from .errors import ConfigError, TrajplanError, WeightFormatError
from .geometry import Pose2
from .gnn import TrajectoryNet, position_error_curve, train as train_gnn
from .world import PlanningTask

logger = logging.getLogger("trajplan")

EXIT_OK = 0
EXIT_PLANNING = 2
EXIT_INVALID = 3
EXIT_SELFCHECK = 4


def _load_run_config(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def _parse_pose(text: str) -> Pose2:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"pose must be 'x,y,theta', got {text!r}")
    return Pose2(float(parts[0]), float(parts[1]), float(parts[2]))


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_maps(args) -> int:
    cfg = _load_run_config(args)
    d = cfg.dataset
    maps = dataset.generate_maps(
        args.count or d.map_count,
        d.bounds,
        (d.obstacles_min, d.obstacles_max),
        seed=args.seed,
        style=args.style,
        obstacle_separation=d.obstacle_separation,
    )
    dataset.save_maps(maps, args.out)
    logger.info("wrote %d maps to %s", len(maps), args.out)
    return EXIT_OK


def cmd_build_dataset(args) -> int:
    cfg = _load_run_config(args)
    maps = dataset.load_maps(args.maps)
    t0 = time.perf_counter()
    if args.tasks_per_map:
        cfg = cfg.replace_section("dataset", tasks_per_map=args.tasks_per_map)
    samples, failures = dataset.build_dataset(
        maps, cfg, seed=args.seed, jobs=args.jobs,
        progress=lambda done, total: logger.info("labeled %d/%d", done, total),
    )
    meta = {"seed": args.seed, "maps": len(maps), "tasks_per_map": cfg.dataset.tasks_per_map}
    dataset.save_dataset(samples, failures, args.out, meta=meta)
    total = len(samples) + len(failures)
    rate = len(samples) / total if total else 0.0
    logger.info(
        "dataset: %d samples, %d failures (%.0f%% converged) in %.1f s -> %s",
        len(samples), len(failures), 100 * rate, time.perf_counter() - t0, args.out,
    )
    for stage in ("hybrid_astar", "profile", "solver", "audit"):
        n = sum(1 for f in failures if f.stage == stage)
        if n:
            logger.info("  failures at %s: %d", stage, n)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    samples, _, _ = dataset.load_dataset(args.dataset)
    if not samples:
        logger.error("dataset %s holds no samples", args.dataset)
        return EXIT_INVALID
    updates = {"seed": args.seed}
    if args.epochs:
        updates["epochs"] = args.epochs
    tc = dataclasses.replace(cfg.train, **updates)
    t0 = time.perf_counter()
    net, history = train_gnn(
        samples, cfg.gnn, tc, params_v=cfg.vehicle,
        log_fn=lambda h: logger.info(
            "epoch %d/%d train %.5f test %.5f lr %.5f",
            h["epoch"], tc.epochs, h["train_loss"], h["test_loss"], h["lr"],
        ) if h["epoch"] % max(1, tc.epochs // 10) == 0 else None,
    )
    net.save(args.out)
    if args.log:
        with open(args.log, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "train_loss", "test_loss", "lr"])
            for h in history:
                w.writerow([h["epoch"], repr(h["train_loss"]), repr(h["test_loss"]), repr(h["lr"])])
    logger.info("trained %d epochs in %.1f s -> %s", tc.epochs, time.perf_counter() - t0, args.out)
    return EXIT_OK


def _pick_map(args, cfg: RunConfig):
    maps = dataset.load_maps(args.map)
    if args.map_id:
        for m in maps:
            if m.map_id == args.map_id:
                return m
        raise ConfigError(f"map id {args.map_id!r} not present in {args.map}")
    return maps[args.map_index]


def cmd_plan(args) -> int:
    cfg = _load_run_config(args)
    task_map = _pick_map(args, cfg)
    task = PlanningTask(_parse_pose(args.start), _parse_pose(args.goal))
    net = None
    if args.method == "gnn-ocp":
        if not args.weights:
            logger.error("gnn-ocp needs --weights")
            return EXIT_INVALID
        net = TrajectoryNet.load(args.weights, params_v=cfg.vehicle)

    outcome = pipeline.plan_task(task_map, task, args.method, cfg, net=net)
    out = _out_dir(args)
    stem = f"plan_{task_map.map_id}_{args.method}"
    svg_text = svg.render_plan(task_map, task, cfg.vehicle, outcome.stage1, outcome.final,
                               title=f"{args.method} {'ok' if outcome.converged else 'FAILED'}")
    (out / f"{stem}.svg").write_text(svg_text)

    if outcome.final is not None:
        payload = {
            "schema": "trajplan.trajectory/1",
            "map_id": task_map.map_id,
            "method": args.method,
            "task": task.to_json_dict(),
            "converged": outcome.converged,
            "fallback_used": outcome.fallback_used,
            "trajectory": outcome.final.to_json_dict(),
            "audit": None if outcome.audit is None else {
                "boundary_max": outcome.audit.boundary_max,
                "defect_max": outcome.audit.defect_max,
                "collisions": outcome.audit.collisions,
                "ok": outcome.audit.ok,
            },
        }
        with open(out / f"{stem}.json", "w") as f:
            json.dump(payload, f, sort_keys=True)
            f.write("\n")
    with open(out / f"{stem}.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "converged", "fallback_used", "stage1_time_s", "opt_time_s",
                    "inner_iters", "audit_ok", "error"])
        w.writerow([
            args.method, int(outcome.converged), int(outcome.fallback_used),
            f"{outcome.stage1_time:.6f}", f"{outcome.opt_time:.6f}",
            outcome.report.inner_iters if outcome.report else 0,
            int(bool(outcome.audit and outcome.audit.ok)), outcome.error or "",
        ])

    if not outcome.converged:
        logger.error("planning failed: %s", outcome.error)
        return EXIT_PLANNING
    logger.info("plan ok: %s (fallback=%s); artifacts in %s", outcome.audit.summary(),
                outcome.fallback_used, out)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = _load_run_config(args)
    maps = dataset.load_maps(args.maps)
    methods = tuple(args.methods.split(","))
    result = bench.run_benchmark(
        maps, cfg, args.weights, methods=methods, tasks_per_map=args.tasks_per_map,
        seed=args.seed, jobs=args.jobs, with_warm_start=not args.no_warm_start,
    )
    out = _out_dir(args)
    bench.write_rows_csv(result.rows, out / "benchmark.csv")
    bench.write_gaps_csv(result.gap_curves, out / "gaps.csv")
    bench.write_warm_csv(result.warm_rows, out / "warmstart.csv")
    bench.write_summary_json(result.summary, out / "summary.json")
    for method, s in result.summary["methods"].items():
        logger.info(
            "%s: %d/%d converged, mean total %.2f s, median inner iters %d",
            method, s["converged"], s["tasks"], s["mean_total_time"], s["median_inner_iters"],
        )
    logger.info("benchmark artifacts in %s", out)
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    from .selfcheck import run_selfcheck

    results = run_selfcheck(quick=args.quick)
    ok = True
    for r in results:
        print(r.line())
        ok &= r.passed
    return EXIT_OK if ok else EXIT_SELFCHECK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trajplan", description=__doc__)
    p.add_argument("--config", help="JSON run-config file (flag > file > defaults)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-maps", help="generate random obstacle maps")
    g.add_argument("--count", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--style", default="cycle", choices=("cycle",) + MAP_STYLES)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_maps)

    b = sub.add_parser("build-dataset", help="label tasks through the rule-based pipeline")
    b.add_argument("--maps", required=True)
    b.add_argument("--tasks-per-map", type=int, default=None)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out", required=True)
    b.set_defaults(fn=cmd_build_dataset)

    t = sub.add_parser("train", help="train the trajectory predictor")
    t.add_argument("--dataset", required=True)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.add_argument("--log", help="per-epoch loss CSV")
    t.set_defaults(fn=cmd_train)

    pl = sub.add_parser("plan", help="plan one task end to end")
    pl.add_argument("--map", required=True, help="maps JSON file")
    pl.add_argument("--map-id", default=None)
    pl.add_argument("--map-index", type=int, default=0)
    pl.add_argument("--start", required=True, help="x,y,theta")
    pl.add_argument("--goal", required=True, help="x,y,theta")
    pl.add_argument("--method", default="hybrid-astar-ocp", choices=pipeline.METHODS)
    pl.add_argument("--weights")
    pl.add_argument("--out-dir", default="out")
    pl.set_defaults(fn=cmd_plan)

    bm = sub.add_parser("benchmark", help="compare methods over sampled tasks")
    bm.add_argument("--maps", required=True)
    bm.add_argument("--tasks-per-map", type=int, default=2)
    bm.add_argument("--methods", default=",".join(pipeline.METHODS))
    bm.add_argument("--weights")
    bm.add_argument("--seed", type=int, default=0)
    bm.add_argument("--jobs", type=int, default=1)
    bm.add_argument("--no-warm-start", action="store_true")
    bm.add_argument("--out-dir", default="bench_out")
    bm.set_defaults(fn=cmd_benchmark)

    sc = sub.add_parser("selfcheck", help="gradient, geometry, and solver self-checks")
    sc.add_argument("--quick", action="store_true")
    sc.set_defaults(fn=cmd_selfcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.fn(args)
    except (ConfigError, WeightFormatError, FileNotFoundError, ValueError) as e:
        logger.error("invalid input: %s", e)
        return EXIT_INVALID
    except TrajplanError as e:
        logger.error("planning failed: %s", e)
        return EXIT_PLANNING


if __name__ == "__main__":
    sys.exit(main())
