"""Geometric RRT* baseline: 2D shortest-path search that ignores kinematics.

The tree lives in (x, y) only; obstacles are inflated by half the vehicle
width for the point-robot check.  Headings are added afterwards with
:func:`dress_path` so the result can seed the trajectory optimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidTaskError, NoSolutionError
from .geometry import Pose2, point_in_polygon_raycast
from .vehicle import VehicleParams
from .world import TaskMap


@dataclass(frozen=True)
class RrtConfig:
    step: float = 1.0
    max_iters: int = 5000
    goal_bias: float = 0.05
    rewire_radius: float = 3.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.step <= 0:
            raise ConfigError("RRT* step must be positive")
        if not 0.0 <= self.goal_bias <= 0.2:
            raise ConfigError("goal_bias must lie in [0, 0.2]")
        if self.max_iters < 1 or self.rewire_radius <= 0:
            raise ConfigError("max_iters and rewire_radius must be positive")


class _EdgeSet:
    """All obstacle edges flattened for vectorized segment-clearance queries."""

    def __init__(self, task_map: TaskMap):
        a, b = [], []
        for poly in task_map.obstacles:
            v = poly.vertices
            a.append(v)
            b.append(np.roll(v, -1, axis=0))
        self.a = np.concatenate(a) if a else np.zeros((0, 2))
        self.b = np.concatenate(b) if b else np.zeros((0, 2))
        self.obstacles = task_map.obstacles

    def point_clear(self, p: np.ndarray, clearance: float) -> bool:
        if len(self.a) == 0:
            return True
        if _point_edges_min_dist(p, self.a, self.b) < clearance:
            return False
        return not any(point_in_polygon_raycast(p, poly) for poly in self.obstacles)

    def segment_clear(self, p: np.ndarray, q: np.ndarray, clearance: float) -> bool:
        """True iff segment pq keeps `clearance` from every obstacle and stays outside."""
        if len(self.a) == 0:
            return True
        if _segments_cross(p, q, self.a, self.b):
            return False
        d = min(
            _point_edges_min_dist(p, self.a, self.b),
            _point_edges_min_dist(q, self.a, self.b),
            _points_segment_min_dist(self.a, p, q),
            _points_segment_min_dist(self.b, p, q),
        )
        if d < clearance:
            return False
        # segment entirely inside an obstacle leaves no edge crossing
        return not any(point_in_polygon_raycast(p, poly) for poly in self.obstacles)


def _point_edges_min_dist(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.einsum("ij,ij->i", p - a, ab) / np.where(denom > 0, denom, 1.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return float(np.sqrt(np.min(np.sum((p - proj) ** 2, axis=1))))


def _points_segment_min_dist(pts: np.ndarray, p: np.ndarray, q: np.ndarray) -> float:
    pq = q - p
    denom = float(pq @ pq)
    if denom == 0.0:
        d = pts - p
        return float(np.sqrt(np.min(np.sum(d * d, axis=1))))
    t = np.clip((pts - p) @ pq / denom, 0.0, 1.0)
    proj = p + t[:, None] * pq
    return float(np.sqrt(np.min(np.sum((pts - proj) ** 2, axis=1))))


def _segments_cross(p: np.ndarray, q: np.ndarray, a: np.ndarray, b: np.ndarray) -> bool:
    def orient(o, d, pts):
        return (d[0] - o[0]) * (pts[:, 1] - o[1]) - (d[1] - o[1]) * (pts[:, 0] - o[0])

    d1 = orient(p, q, a)
    d2 = orient(p, q, b)
    d3 = (b[:, 0] - a[:, 0]) * (q[1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (q[0] - a[:, 0])
    d4 = (b[:, 0] - a[:, 0]) * (p[1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (p[0] - a[:, 0])
    return bool(np.any((d1 * d2 < 0) & (d3 * d4 < 0)))


def plan_path(
    task_map: TaskMap,
    start,
    goal,
    cfg: RrtConfig,
    params: VehicleParams,
    audit_costs: list | None = None,
) -> np.ndarray:
    """Collision-free polyline from start to goal, asymptotically shortened by rewiring.

    Deterministic for a fixed cfg.rng_seed.  When `audit_costs` is given, the
    best goal-path cost is appended every 100 iterations (inf until first
    connection) so tests can audit rewiring monotonicity.

    Raises NoSolutionError when the iteration budget ends with no connection.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    clearance = params.width / 2.0
    edges = _EdgeSet(task_map)
    if not edges.point_clear(start, clearance):
        raise InvalidTaskError("start point violates the inflated-obstacle clearance")
    if not edges.point_clear(goal, clearance):
        raise InvalidTaskError("goal point violates the inflated-obstacle clearance")

    x0, y0, x1, y1 = task_map.bounds
    pts = np.empty((cfg.max_iters + 1, 2))
    pts[0] = start
    parent = np.full(cfg.max_iters + 1, -1, dtype=int)
    cost = np.full(cfg.max_iters + 1, np.inf)
    cost[0] = 0.0
    children: list[set[int]] = [set() for _ in range(cfg.max_iters + 1)]
    goal_links: dict[int, float] = {}  # node -> verified clear distance to goal
    n = 1

    def propagate(root: int) -> None:
        stack = [root]
        while stack:
            j = stack.pop()
            for ch in children[j]:
                cost[ch] = cost[j] + math.hypot(*(pts[ch] - pts[j]))
                stack.append(ch)

    def best_goal() -> tuple[float, int]:
        best_c, best_j = math.inf, -1
        for j, gd in goal_links.items():
            c = cost[j] + gd
            if c < best_c:
                best_c, best_j = c, j
        return best_c, best_j

    for it in range(cfg.max_iters):
        if rng.random() < cfg.goal_bias:
            sample = goal
        else:
            sample = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])

        d2 = np.sum((pts[:n] - sample) ** 2, axis=1)
        nearest = int(np.argmin(d2))
        delta = sample - pts[nearest]
        dist = math.hypot(*delta)
        if dist < 1e-9:
            continue
        new = sample if dist <= cfg.step else pts[nearest] + delta * (cfg.step / dist)
        if not (x0 <= new[0] <= x1 and y0 <= new[1] <= y1):
            continue
        if not edges.point_clear(new, clearance):
            continue

        # choose the cheapest feasible parent within the rewire radius
        d = np.sqrt(np.sum((pts[:n] - new) ** 2, axis=1))
        near = np.flatnonzero(d <= cfg.rewire_radius)
        if nearest not in near:
            near = np.append(near, nearest)
        best_parent, best_cost = -1, math.inf
        for j in near:
            c = cost[j] + d[j]
            if c < best_cost and edges.segment_clear(pts[j], new, clearance):
                best_parent, best_cost = int(j), c
        if best_parent < 0:
            continue

        pts[n] = new
        parent[n] = best_parent
        cost[n] = best_cost
        children[best_parent].add(n)

        # rewire neighbors through the new node
        for j in near:
            c = best_cost + d[j]
            if c + 1e-12 < cost[j] and edges.segment_clear(new, pts[j], clearance):
                children[parent[j]].discard(int(j))
                parent[j] = n
                children[n].add(int(j))
                cost[j] = c
                propagate(int(j))

        gd = math.hypot(*(goal - new))
        if gd <= cfg.step and edges.segment_clear(new, goal, clearance):
            goal_links[n] = gd
        n += 1
        if audit_costs is not None and (it + 1) % 100 == 0:
            audit_costs.append(best_goal()[0])

    best_cost_final, best_goal_parent = best_goal()
    if best_goal_parent < 0:
        raise NoSolutionError(f"no path after {cfg.max_iters} iterations")

    chain = [goal]
    j = best_goal_parent
    while j >= 0:
        chain.append(pts[j].copy())
        j = parent[j]
    chain.reverse()
    return np.array(chain)


def dress_path(polyline: np.ndarray) -> list[Pose2]:
    """Attach tangent headings to a polyline (central differences in index).

    Endpoints use one-sided differences.  Needs at least 2 points.
    """
    pts = np.asarray(polyline, dtype=float)
    if len(pts) < 2:
        raise ValueError("dress_path needs at least 2 points")
    out = []
    for i in range(len(pts)):
        if i == 0:
            d = pts[1] - pts[0]
        elif i == len(pts) - 1:
            d = pts[-1] - pts[-2]
        else:
            d = pts[i + 1] - pts[i - 1]
        out.append(Pose2(float(pts[i, 0]), float(pts[i, 1]), math.atan2(d[1], d[0])))
    return out
