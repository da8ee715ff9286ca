"""Hybrid A*: graph search over discretized (x, y, theta) with bicycle-arc primitives.

Produces the rule-based initial trajectory used for dataset labeling and as
the online fallback.  Search is deterministic: ties break on lowest f, then
lowest insertion id.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidTaskError, SearchExhaustedError
from .geometry import Pose2, normalize_angle
from .trajectory import PathPoint
from .vehicle import VehicleParams
from .world import TaskMap, _GRID_CELL, _circumradius


def _far_radius(params: VehicleParams) -> float:
    # beyond this clearance a pose cannot collide regardless of heading
    return _circumradius(params) + 2.0 * _GRID_CELL

# Worst-case ratio of an 8-connected grid path to the Euclidean shortest path
# is 1/cos(pi/8); scaling grid distances by cos(pi/8) keeps them admissible.
_OCTILE_SCALE = math.cos(math.pi / 8.0)

# Coarse cell size for the Dijkstra heuristic field.
_FIELD_CELL = 0.4

# Spacing of collision samples along a primitive arc.
_COLLISION_SPACING = 0.1

DEFAULT_NODE_BUDGET = 200_000


@dataclass(frozen=True)
class GridSpec:
    """Discretization of the search space.  dtheta defaults to pi/4 (0.785)."""

    dx: float = 0.2
    dy: float = 0.2
    dtheta: float = 0.785
    bounds: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if min(self.dx, self.dy, self.dtheta) <= 0:
            raise ConfigError("grid resolutions must be positive")

    @property
    def arc_length(self) -> float:
        # one primitive crosses a cell
        return 1.2 * max(self.dx, self.dy)


@dataclass
class SearchNode:
    pose: Pose2
    direction: int  # +1 forward, -1 reverse, 0 for the root
    steer: float
    g: float  # shaped cost, meters-equivalent
    length: float  # raw driven meters (for admissibility audits)
    parent: int  # index into the node store, -1 for root
    node_id: int


@dataclass(frozen=True)
class HybridPathPoint:
    pose: Pose2
    direction: int
    steer: float
    arc: float  # arc length from the previous point (0 for the first)

    def as_path_point(self) -> PathPoint:
        return PathPoint(self.pose, self.direction if self.direction != 0 else 1)


def steering_set(params: VehicleParams) -> list[float]:
    m = params.phi_max
    return [-m, -m / 2.0, 0.0, m / 2.0, m]


def primitive_endpoint(pose: Pose2, steer: float, direction: int, arc: float, wheelbase: float) -> Pose2:
    """Closed-form endpoint of a constant-steer arc (exact bicycle integration)."""
    s = direction * arc
    k = math.tan(steer) / wheelbase
    if abs(k) < 1e-12:
        return Pose2(pose.x + s * math.cos(pose.theta), pose.y + s * math.sin(pose.theta), pose.theta)
    th = pose.theta + s * k
    return Pose2(
        pose.x + (math.sin(th) - math.sin(pose.theta)) / k,
        pose.y - (math.cos(th) - math.cos(pose.theta)) / k,
        th,
    )


def interpolate_primitive(
    pose: Pose2, steer: float, direction: int, arc: float, wheelbase: float, spacing: float = _COLLISION_SPACING
) -> np.ndarray:
    """(N, 3) poses along the arc at <= spacing intervals, endpoint included, start excluded."""
    n = max(1, int(math.ceil(arc / spacing)))
    fractions = np.arange(1, n + 1) / n
    out = np.empty((n, 3))
    for i, f in enumerate(fractions):
        p = primitive_endpoint(pose, steer, direction, arc * f, wheelbase)
        out[i] = (p.x, p.y, p.theta)
    return out


def _primitive_offsets(
    steers: np.ndarray, directions: np.ndarray, arc: float, wheelbase: float, n_samples: int
) -> np.ndarray:
    """Sample points of every primitive from the canonical pose (0, 0, 0): (M, n_samples, 3).

    Arcs are rigid, so a rollout from an arbitrary pose is this table rotated
    and translated.
    """
    s = directions[:, None] * arc * (np.arange(1, n_samples + 1) / n_samples)[None, :]
    k = np.tan(steers) / wheelbase
    out = np.empty((len(steers), n_samples, 3))
    straight = np.abs(k) < 1e-12
    th = s * k[:, None]
    out[:, :, 2] = th
    with np.errstate(divide="ignore", invalid="ignore"):
        out[:, :, 0] = np.sin(th) / k[:, None]
        out[:, :, 1] = -(np.cos(th) - 1.0) / k[:, None]
    if straight.any():
        out[straight, :, 0] = s[straight]
        out[straight, :, 1] = 0.0
    return out


def expand(node: SearchNode, grid: GridSpec, params: VehicleParams,
           *, reverse_penalty: float = 1.5, switch_penalty: float = 0.5,
           steer_change_penalty: float = 0.1) -> list[SearchNode]:
    """All 10 kinematic successors (5 steering angles x 2 directions), ignoring collisions.

    g-cost shaping: reverse arcs cost reverse_penalty x length, a direction
    switch adds switch_penalty meters-equivalent, and steering changes add
    steer_change_penalty per radian.
    """
    arc = grid.arc_length
    out = []
    for direction in (1, -1):
        for steer in steering_set(params):
            pose = primitive_endpoint(node.pose, steer, direction, arc, params.wheelbase)
            g = node.g + arc * (reverse_penalty if direction < 0 else 1.0)
            if node.direction != 0 and direction != node.direction:
                g += switch_penalty
            if node.direction != 0:
                g += steer_change_penalty * abs(steer - node.steer)
            out.append(
                SearchNode(pose, direction, steer, g, node.length + arc, node.node_id, -1)
            )
    return out


class DistanceField:
    """Obstacle-aware 2D Dijkstra distances to the goal on a coarse grid.

    clearance_floor > 0 additionally blocks cells that certainly cannot hold a
    disc of that radius, which turns the field into a sound reachability
    filter for a vehicle of width 2 * clearance_floor.
    """

    def __init__(self, task_map: TaskMap, goal_xy: tuple[float, float],
                 cell: float = _FIELD_CELL, clearance_floor: float = 0.0):
        x0, y0, x1, y1 = task_map.bounds
        self.cell = cell
        self.x0, self.y0 = x0, y0
        nx = max(2, int(math.ceil((x1 - x0) / cell)) + 1)
        ny = max(2, int(math.ceil((y1 - y0) / cell)) + 1)
        grid = task_map.clearance_grid()
        xs = x0 + cell * np.arange(nx)
        ys = y0 + cell * np.arange(ny)
        gx, gy = np.meshgrid(xs, ys)
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
        # soundness slack: cell-center offset plus the clearance grid's own error
        slack = cell * math.sqrt(2.0) / 2.0 + grid.cell * math.sqrt(2.0)
        threshold = max(0.0, clearance_floor - slack)
        blocked = (grid.query_many(pts) <= threshold).reshape(ny, nx)
        self.dist = np.full((ny, nx), np.inf)
        gi = min(max(int(round((goal_xy[1] - y0) / cell)), 0), ny - 1)
        gj = min(max(int(round((goal_xy[0] - x0) / cell)), 0), nx - 1)
        if not blocked[gi, gj]:
            self.dist[gi, gj] = 0.0
            pq = [(0.0, gi, gj)]
            diag = math.sqrt(2.0) * cell
            moves = [(-1, 0, cell), (1, 0, cell), (0, -1, cell), (0, 1, cell),
                     (-1, -1, diag), (-1, 1, diag), (1, -1, diag), (1, 1, diag)]
            dist = self.dist
            while pq:
                d, i, j = heapq.heappop(pq)
                if d > dist[i, j]:
                    continue
                for di, dj, step in moves:
                    ni, nj = i + di, j + dj
                    if 0 <= ni < ny and 0 <= nj < nx and not blocked[ni, nj]:
                        nd = d + step
                        if nd < dist[ni, nj]:
                            dist[ni, nj] = nd
                            heapq.heappush(pq, (nd, ni, nj))

    def query(self, x: float, y: float) -> float:
        i = min(max(int(round((y - self.y0) / self.cell)), 0), self.dist.shape[0] - 1)
        j = min(max(int(round((x - self.x0) / self.cell)), 0), self.dist.shape[1] - 1)
        return float(self.dist[i, j])

    def query_many(self, xy: np.ndarray) -> np.ndarray:
        i = np.clip(np.rint((xy[:, 1] - self.y0) / self.cell).astype(int), 0, self.dist.shape[0] - 1)
        j = np.clip(np.rint((xy[:, 0] - self.x0) / self.cell).astype(int), 0, self.dist.shape[1] - 1)
        return self.dist[i, j]


def heuristic(pose: Pose2, goal: Pose2, task_map: TaskMap, field: DistanceField | None = None) -> float:
    """max(Euclidean, scaled obstacle-aware Dijkstra); admissible w.r.t. driven length."""
    if field is None:
        field = _cached_field(task_map, goal)
    euclid = math.hypot(goal.x - pose.x, goal.y - pose.y)
    d = field.query(pose.x, pose.y)
    if not math.isfinite(d):
        return math.inf
    # subtract one cell diagonal for the pose-to-cell-center offset
    grid_est = _OCTILE_SCALE * max(0.0, d - field.cell * math.sqrt(2.0))
    return max(euclid, grid_est)


def _cached_field(task_map: TaskMap, goal: Pose2) -> DistanceField:
    key = ("dfield", round(goal.x, 6), round(goal.y, 6))
    if key not in task_map._caches:
        task_map._caches[key] = DistanceField(task_map, (goal.x, goal.y))
    return task_map._caches[key]


def _width_corridor_reachable(task_map: TaskMap, start: Pose2, goal: Pose2, params: VehicleParams) -> bool:
    """Fast sound infeasibility filter: the vehicle's inscribed disc (radius
    width/2, centered at the body center) must admit a connected corridor.

    True means "possibly reachable"; False is a proof of unreachability.
    """
    offset = params.length / 2.0 - params.rear_hang

    def center(p: Pose2) -> tuple[float, float]:
        return p.x + offset * math.cos(p.theta), p.y + offset * math.sin(p.theta)

    gx, gy = center(goal)
    key = ("wfield", round(gx, 6), round(gy, 6))
    if key not in task_map._caches:
        task_map._caches[key] = DistanceField(
            task_map, (gx, gy), clearance_floor=params.width / 2.0
        )
    sx, sy = center(start)
    return math.isfinite(task_map._caches[key].query(sx, sy))


def _goal_reached(pose: Pose2, goal: Pose2, grid: GridSpec) -> bool:
    return (
        abs(pose.x - goal.x) <= grid.dx
        and abs(pose.y - goal.y) <= grid.dy
        and abs(normalize_angle(pose.theta - goal.theta)) <= grid.dtheta
    )


def plan_path(
    task_map: TaskMap,
    start: Pose2,
    goal: Pose2,
    grid: GridSpec,
    params: VehicleParams,
    *,
    node_budget: int = DEFAULT_NODE_BUDGET,
    reverse_penalty: float = 1.5,
    switch_penalty: float = 0.5,
    steer_change_penalty: float = 0.1,
    heuristic_weight: float = 1.5,
) -> list[HybridPathPoint]:
    """Kinematically feasible, collision-free path from start to goal.

    The returned chain starts at `start`; each later point records the motion
    primitive (steer, direction, arc) that reaches it from its predecessor.
    Endpoint lands within one grid cell of the goal.  Returns [] when the
    start already satisfies the goal tolerance.

    The search inflates the (admissible) heuristic by heuristic_weight, so
    the returned path trades bounded suboptimality for far fewer expansions;
    the cost shaping already makes g exceed raw length anyway and the
    optimization stage polishes the result.

    Raises InvalidTaskError when either endpoint footprint collides and
    SearchExhaustedError when the budget or the whole reachable space is
    exhausted.
    """
    if not task_map.footprint_clear(start, params):
        raise InvalidTaskError("start footprint is in collision")
    if not task_map.footprint_clear(goal, params):
        raise InvalidTaskError("goal footprint is in collision")
    if _goal_reached(start, goal, grid):
        return []

    field = _cached_field(task_map, goal)
    if not math.isfinite(field.query(start.x, start.y)):
        raise SearchExhaustedError("goal is unreachable from the start cell")
    if not _width_corridor_reachable(task_map, start, goal, params):
        raise SearchExhaustedError("no corridor wide enough for the vehicle connects start and goal")

    x0, y0, x1, y1 = task_map.bounds
    arc = grid.arc_length
    n_samples = max(1, int(math.ceil(arc / _COLLISION_SPACING)))
    wheelbase = params.wheelbase
    steers = steering_set(params)
    all_steers = np.array(steers * 2)
    all_dirs = np.array([1] * len(steers) + [-1] * len(steers))
    n_prims = len(all_steers)
    offsets = _primitive_offsets(all_steers, all_dirs, arc, wheelbase, n_samples)
    offsets_flat = offsets.reshape(-1, 3)

    # per-primitive cost increments that do not depend on the parent
    base_cost = arc * np.where(all_dirs < 0, reverse_penalty, 1.0)

    clearance_grid = task_map.clearance_grid()
    r_far = _far_radius(params)
    two_pi = 2.0 * math.pi

    def key_of(pose: Pose2, direction: int) -> tuple[int, int, int, int]:
        return (
            int(math.floor(pose.x / grid.dx)),
            int(math.floor(pose.y / grid.dy)),
            int(math.floor((pose.theta % two_pi) / grid.dtheta)),
            direction,
        )

    nodes: list[SearchNode] = [SearchNode(start, 0, 0.0, 0.0, 0.0, -1, 0)]
    best_g: dict[tuple, float] = {key_of(start, 0): 0.0}
    h0 = heuristic(start, goal, task_map, field)
    open_heap: list[tuple[float, int, int]] = [(h0, 0, 0)]
    expansions = 0
    goal_xy = np.array([goal.x, goal.y])

    while open_heap:
        _, _, idx = heapq.heappop(open_heap)
        node = nodes[idx]
        k = key_of(node.pose, node.direction)
        if node.g > best_g.get(k, math.inf):
            continue
        if _goal_reached(node.pose, goal, grid):
            return _reconstruct(nodes, idx, arc)
        expansions += 1
        if expansions > node_budget:
            raise SearchExhaustedError(f"node budget {node_budget} exhausted")

        # rigid-transform the canonical primitive table to this pose
        c, s = math.cos(node.pose.theta), math.sin(node.pose.theta)
        samples = np.empty_like(offsets_flat)
        ox, oy = offsets_flat[:, 0], offsets_flat[:, 1]
        samples[:, 0] = node.pose.x + c * ox - s * oy
        samples[:, 1] = node.pose.y + s * ox + c * oy
        samples[:, 2] = node.pose.theta + offsets_flat[:, 2]

        # collision prefilter: skip the exact test when every sample is far
        if float(np.min(clearance_grid.query_many(samples[:, :2]))) >= r_far:
            clear = np.ones(n_prims, dtype=bool)
        else:
            clear = task_map.poses_clear(samples, params).reshape(n_prims, n_samples).all(axis=1)

        ends = samples.reshape(n_prims, n_samples, 3)[:, -1, :]
        inside = (
            (ends[:, 0] >= x0) & (ends[:, 0] <= x1) & (ends[:, 1] >= y0) & (ends[:, 1] <= y1)
        )
        usable = clear & inside
        if not usable.any():
            continue

        g_new = node.g + base_cost
        if node.direction != 0:
            g_new = g_new + switch_penalty * (all_dirs != node.direction)
            g_new = g_new + steer_change_penalty * np.abs(all_steers - node.steer)

        # batched heuristic: max(euclid, scaled grid distance)
        euclid = np.hypot(ends[:, 0] - goal_xy[0], ends[:, 1] - goal_xy[1])
        grid_d = field.query_many(ends[:, :2])
        h_vals = np.maximum(euclid, _OCTILE_SCALE * np.maximum(0.0, grid_d - field.cell * math.sqrt(2.0)))
        f_vals = g_new + heuristic_weight * h_vals

        for i in np.flatnonzero(usable):
            g = float(g_new[i])
            pose = Pose2(float(ends[i, 0]), float(ends[i, 1]), float(ends[i, 2]))
            direction = int(all_dirs[i])
            sk = key_of(pose, direction)
            if g >= best_g.get(sk, math.inf):
                continue
            best_g[sk] = g
            nid = len(nodes)
            nodes.append(SearchNode(pose, direction, float(all_steers[i]), g, node.length + arc, idx, nid))
            if math.isfinite(f_vals[i]):
                heapq.heappush(open_heap, (float(f_vals[i]), nid, nid))

    raise SearchExhaustedError("open set exhausted without reaching the goal")


def _reconstruct(nodes: list[SearchNode], idx: int, arc: float) -> list[HybridPathPoint]:
    chain = []
    while idx >= 0:
        chain.append(nodes[idx])
        idx = nodes[idx].parent
    chain.reverse()
    out = [HybridPathPoint(chain[0].pose, chain[0].direction, chain[0].steer, 0.0)]
    for n in chain[1:]:
        out.append(HybridPathPoint(n.pose, n.direction, n.steer, arc))
    return out


def path_length(path: list[HybridPathPoint]) -> float:
    return sum(p.arc for p in path)


def path_as_points(path: list[HybridPathPoint]) -> list[PathPoint]:
    return [p.as_path_point() for p in path]
