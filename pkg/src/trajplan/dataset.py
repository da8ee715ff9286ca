"""Map generation, task sampling, labeling, and dataset serialization.

Labels are produced by the rule-based pipeline: search -> speed profile ->
trajectory optimization.  Tasks whose search or optimization fails are
recorded and dropped, so every stored sample carries a locally optimal,
audit-clean trajectory.  Everything is deterministic per seed.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import pipeline
from .config import MAP_STYLES, DatasetConfig, RunConfig
from .errors import ConfigError, TrajplanError
from .geometry import Polygon, Pose2, polygon_distance, polygons_intersect
from .trajectory import TimedTrajectory
from .world import PlanningTask, TaskMap

logger = logging.getLogger(__name__)

DATASET_SCHEMA = "trajplan.dataset/1"


@dataclass
class LabeledSample:
    task_map: TaskMap
    task: PlanningTask
    label: TimedTrajectory
    provenance: dict


@dataclass
class LabelFailure:
    map_id: str
    task_index: int
    stage: str  # hybrid_astar | profile | solver | audit
    detail: str


# ---------------------------------------------------------------------------
# Map generation
# ---------------------------------------------------------------------------

def _rect(rng: np.random.Generator, cx: float, cy: float) -> np.ndarray:
    w = rng.uniform(1.5, 5.0)
    h = rng.uniform(1.5, 5.0)
    return np.array([
        [cx - w / 2, cy - h / 2], [cx + w / 2, cy - h / 2],
        [cx + w / 2, cy + h / 2], [cx - w / 2, cy + h / 2],
    ])


def _convex_blob(rng: np.random.Generator, cx: float, cy: float) -> np.ndarray:
    n = int(rng.integers(5, 9))
    angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, n))
    radii = rng.uniform(1.2, 3.0, n)
    pts = np.stack([cx + radii * np.cos(angles), cy + radii * np.sin(angles)], axis=1)
    hull = _convex_hull(pts)
    return hull


def _star(rng: np.random.Generator, cx: float, cy: float) -> np.ndarray:
    """Non-convex star-shaped polygon (exercises convex decomposition)."""
    spikes = int(rng.integers(3, 5))
    outer = rng.uniform(1.8, 3.0)
    inner = outer * rng.uniform(0.45, 0.65)
    base = rng.uniform(0.0, 2.0 * math.pi)
    pts = []
    for i in range(2 * spikes):
        r = outer if i % 2 == 0 else inner
        a = base + math.pi * i / spikes
        pts.append([cx + r * math.cos(a), cy + r * math.sin(a)])
    return np.array(pts)


def _convex_hull(pts: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns CCW hull vertices."""
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and np.cross(out[-1] - out[-2], p - out[-2]) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


_SHAPE_MIX = {
    "mixed": (("rect", 0.5), ("convex", 0.35), ("star", 0.15)),
    "irregular": (("convex", 0.7), ("star", 0.3)),
}


def _style_recipe(style: str) -> tuple[str, tuple[int, int]]:
    family, density = style.rsplit("-", 1)
    if family not in _SHAPE_MIX or density not in ("sparse", "dense"):
        raise ConfigError(f"unknown map style {style!r}")
    return family, ((4, 6) if density == "sparse" else (7, 10))


def generate_maps(
    count: int,
    bounds: tuple[float, float, float, float],
    obstacle_range: tuple[int, int],
    seed: int,
    style: str = "cycle",
    obstacle_separation: float = 0.8,
) -> list[TaskMap]:
    """Deterministic random maps; obstacles never overlap or leave the bounds.

    style "cycle" rotates through the four benchmark styles.  A map whose
    obstacle placement fails 1000 rejections in a row is skipped with a
    warning, so fewer than `count` maps can come back in pathological setups.
    """
    if count < 1:
        raise ConfigError("count must be >= 1")
    root = np.random.SeedSequence(seed)
    out: list[TaskMap] = []
    for i, child in enumerate(root.spawn(count)):
        map_style = MAP_STYLES[i % len(MAP_STYLES)] if style == "cycle" else style
        rng = np.random.default_rng(child)
        m = _generate_one(rng, bounds, obstacle_range, map_style, obstacle_separation,
                          map_id=f"map-{seed}-{i:03d}", seed=seed)
        if m is None:
            logger.warning("map %d: obstacle placement failed; skipping", i)
            continue
        out.append(m)
    return out


def _generate_one(rng, bounds, obstacle_range, style, separation, map_id, seed) -> TaskMap | None:
    family, style_range = _style_recipe(style)
    lo = max(obstacle_range[0], style_range[0])
    hi = min(obstacle_range[1], style_range[1])
    if hi < lo:
        lo, hi = style_range
    n_obs = int(rng.integers(lo, hi + 1))
    mix = _SHAPE_MIX[family]
    names = [m[0] for m in mix]
    weights = np.array([m[1] for m in mix])
    x0, y0, x1, y1 = bounds
    margin = 3.2  # keeps obstacle centers away from the walls
    obstacles: list[Polygon] = []
    for _ in range(n_obs):
        placed = False
        for _ in range(1000):
            shape = names[int(rng.choice(len(names), p=weights / weights.sum()))]
            cx = rng.uniform(x0 + margin, x1 - margin)
            cy = rng.uniform(y0 + margin, y1 - margin)
            verts = {"rect": _rect, "convex": _convex_blob, "star": _star}[shape](rng, cx, cy)
            try:
                poly = Polygon(verts).validate()
            except TrajplanError:
                continue
            pxmin, pymin, pxmax, pymax = poly.aabb()
            if pxmin < x0 or pymin < y0 or pxmax > x1 or pymax > y1:
                continue
            if any(
                polygons_intersect(poly, q) or polygon_distance(poly, q) < separation
                for q in obstacles
            ):
                continue
            obstacles.append(poly)
            placed = True
            break
        if not placed:
            return None
    return TaskMap(tuple(bounds), obstacles, map_id=map_id, seed=seed, style=style).validate()


# ---------------------------------------------------------------------------
# Task sampling
# ---------------------------------------------------------------------------

def sample_tasks(
    task_map: TaskMap,
    k: int,
    seed: int,
    params=None,
    min_clearance: float = 0.3,
    min_separation: float = 5.0,
    attempts_per_pose: int = 600,
) -> list[PlanningTask]:
    """Up to k start/goal pairs with clear, well-separated footprints.

    Returns fewer than k (with a warning) when sampling keeps failing.
    """
    from .vehicle import VehicleParams

    params = params or VehicleParams()
    rng = np.random.default_rng(np.random.SeedSequence([seed, _stable_id(task_map.map_id)]))
    x0, y0, x1, y1 = task_map.bounds
    inset = 2.2

    def sample_pose() -> Pose2 | None:
        for _ in range(attempts_per_pose):
            pose = Pose2(
                rng.uniform(x0 + inset, x1 - inset),
                rng.uniform(y0 + inset, y1 - inset),
                rng.uniform(-math.pi, math.pi),
            )
            if not task_map.footprint_clear(pose, params):
                continue
            if task_map.footprint_clearance(pose, params) < min_clearance:
                continue
            return pose
        return None

    out: list[PlanningTask] = []
    for _ in range(k):
        task = None
        for _ in range(attempts_per_pose):
            start = sample_pose()
            goal = sample_pose()
            if start is None or goal is None:
                break
            if math.hypot(goal.x - start.x, goal.y - start.y) < min_separation:
                continue
            task = PlanningTask(start, goal)
            break
        if task is None:
            logger.warning("map %s: task sampling exhausted after %d pairs", task_map.map_id, len(out))
            break
        out.append(task)
    return out


def _stable_id(map_id: str) -> int:
    return sum((i + 1) * b for i, b in enumerate(map_id.encode())) % (2**31)


# ---------------------------------------------------------------------------
# Labeling
# ---------------------------------------------------------------------------

def label(task_map: TaskMap, task: PlanningTask, cfg: RunConfig, task_index: int = 0):
    """Run search -> profile -> optimize -> audit; returns LabeledSample or LabelFailure."""
    try:
        init = pipeline.hybrid_stage1(task_map, task, cfg)
    except TrajplanError as e:
        return LabelFailure(task_map.map_id, task_index, _stage_of(e), str(e))
    final, report, _ = pipeline.solve_task(task_map, task, init, cfg)
    if not report.converged:
        return LabelFailure(task_map.map_id, task_index, "solver", f"status={report.status}")
    audit = pipeline.audit_solution(task_map, task, final, cfg)
    if not audit.ok:
        return LabelFailure(task_map.map_id, task_index, "audit", audit.summary())
    provenance = {
        "status": report.status,
        "outer_iters": report.outer_iters,
        "inner_iters": report.inner_iters,
        "feasibility": report.feasibility,
        "objective": report.objective,
    }
    return LabeledSample(task_map, task, final, provenance)


def _stage_of(e: TrajplanError) -> str:
    from .errors import EmptyPathError, InfeasibleTimeError, InvalidTaskError, SearchExhaustedError

    if isinstance(e, (SearchExhaustedError, InvalidTaskError)):
        return "hybrid_astar"
    if isinstance(e, (InfeasibleTimeError, EmptyPathError)):
        return "profile"
    return "pipeline"


def _label_worker(args):
    task_map, task, cfg, idx = args
    return label(task_map, task, cfg, idx)


def build_dataset(
    maps: list[TaskMap],
    cfg: RunConfig,
    seed: int,
    jobs: int = 1,
    progress=None,
) -> tuple[list[LabeledSample], list[LabelFailure]]:
    """Label cfg.dataset.tasks_per_map tasks on every map; order-stable and seeded."""
    work = []
    idx = 0
    for m in maps:
        tasks = sample_tasks(
            m, cfg.dataset.tasks_per_map, seed, cfg.vehicle,
            min_clearance=cfg.dataset.min_clearance,
            min_separation=cfg.dataset.min_separation,
        )
        for t in tasks:
            work.append((m, t, cfg, idx))
            idx += 1

    samples: list[LabeledSample] = []
    failures: list[LabelFailure] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_label_worker, work, chunksize=1))
    else:
        results = []
        for w in work:
            results.append(_label_worker(w))
            if progress is not None:
                progress(len(results), len(work))
    for r in results:
        (samples if isinstance(r, LabeledSample) else failures).append(r)
    return samples, failures


# ---------------------------------------------------------------------------
# Serialization and split
# ---------------------------------------------------------------------------

def save_maps(maps: list[TaskMap], path) -> None:
    payload = {"schema": "trajplan.maps/1", "maps": [m.to_json_dict() for m in maps]}
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")


def load_maps(path) -> list[TaskMap]:
    with open(path) as f:
        payload = json.load(f)
    if payload.get("schema") != "trajplan.maps/1":
        raise ConfigError(f"unsupported maps schema {payload.get('schema')!r}")
    return [TaskMap.from_json_dict(d) for d in payload["maps"]]


def save_dataset(samples: list[LabeledSample], failures: list[LabelFailure], path, meta: dict | None = None) -> None:
    maps: list[TaskMap] = []
    map_index: dict[str, int] = {}
    records = []
    for s in samples:
        if s.task_map.map_id not in map_index:
            map_index[s.task_map.map_id] = len(maps)
            maps.append(s.task_map)
        records.append({
            "map_index": map_index[s.task_map.map_id],
            "start": list(s.task.start),
            "goal": list(s.task.goal),
            "label": s.label.to_json_dict(),
            "provenance": s.provenance,
        })
    payload = {
        "schema": DATASET_SCHEMA,
        "meta": meta or {},
        "maps": [m.to_json_dict() for m in maps],
        "samples": records,
        "failures": [
            {"map_id": f.map_id, "task_index": f.task_index, "stage": f.stage, "detail": f.detail}
            for f in failures
        ],
    }
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True)
        f.write("\n")


def load_dataset(path) -> tuple[list[LabeledSample], list[LabelFailure], dict]:
    try:
        with open(path) as f:
            payload = json.load(f)
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read dataset {path}: {e}") from e
    if payload.get("schema") != DATASET_SCHEMA:
        raise ConfigError(f"unsupported dataset schema {payload.get('schema')!r}")
    maps = [TaskMap.from_json_dict(d) for d in payload["maps"]]
    samples = []
    for r in payload["samples"]:
        samples.append(LabeledSample(
            task_map=maps[r["map_index"]],
            task=PlanningTask(Pose2(*r["start"]), Pose2(*r["goal"])),
            label=TimedTrajectory.from_json_dict(r["label"]),
            provenance=r.get("provenance", {}),
        ))
    failures = [LabelFailure(**f) for f in payload.get("failures", [])]
    return samples, failures, payload.get("meta", {})


def split_samples(samples: list, ratio: float = 0.9, seed: int = 0) -> tuple[list, list]:
    """Deterministic disjoint exhaustive split; test gets floor((1-ratio) n)."""
    if not samples:
        raise ValueError("cannot split an empty dataset")
    if not 0.0 < ratio < 1.0:
        raise ValueError("split ratio must lie in (0, 1)")
    n = len(samples)
    n_test = int(math.floor((1.0 - ratio) * n))
    perm = np.random.default_rng(np.random.SeedSequence([seed, n])).permutation(n)
    test_idx = set(perm[:n_test].tolist())
    train = [samples[i] for i in range(n) if i not in test_idx]
    test = [samples[i] for i in range(n) if i in test_idx]
    return train, test
