"""Obstacle maps and planning tasks, with cached collision-query structures.

A TaskMap owns polygonal obstacles inside a rectangular workspace.  Planners
query it through a coarse distance grid (cheap "definitely clear" rejections)
backed by exact convex-piece overlap tests, so the fast path never reports a
colliding pose as free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .geometry import (
    Polygon,
    Pose2,
    convex_decompose,
    point_polygon_distance,
    polygon_distance,
    polygons_intersect,
)
from .vehicle import VehicleParams

MAP_SCHEMA = "trajplan.map/1"

# Resolution of the clearance grid used to prefilter footprint checks.
_GRID_CELL = 0.1


class ClearanceGrid:
    """Distance (meters) from each cell center to the nearest obstacle.

    Cells are marked occupied when they lie within half a cell diagonal of an
    obstacle, so the reported distance never exceeds the true clearance by
    more than half a diagonal: treating `query() - cell_diag` as a lower bound
    on true clearance is always safe.
    """

    def __init__(self, bounds: tuple[float, float, float, float], obstacles: Sequence[Polygon], cell: float = _GRID_CELL):
        x0, y0, x1, y1 = bounds
        self.cell = cell
        self.x0, self.y0 = x0, y0
        nx = max(2, int(math.ceil((x1 - x0) / cell)) + 1)
        ny = max(2, int(math.ceil((y1 - y0) / cell)) + 1)
        occupied = np.zeros((ny, nx), dtype=bool)
        half_diag = cell * math.sqrt(2.0) / 2.0
        xs = x0 + cell * np.arange(nx)
        ys = y0 + cell * np.arange(ny)
        for poly in obstacles:
            pxmin, pymin, pxmax, pymax = poly.aabb()
            ix0 = max(0, int((pxmin - x0 - half_diag) / cell) - 1)
            ix1 = min(nx - 1, int((pxmax - x0 + half_diag) / cell) + 1)
            iy0 = max(0, int((pymin - y0 - half_diag) / cell) - 1)
            iy1 = min(ny - 1, int((pymax - y0 + half_diag) / cell) + 1)
            if ix1 < ix0 or iy1 < iy0:
                continue
            gx, gy = np.meshgrid(xs[ix0 : ix1 + 1], ys[iy0 : iy1 + 1])
            pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
            occupied[iy0 : iy1 + 1, ix0 : ix1 + 1] |= (
                _points_near_polygon(pts, poly, half_diag).reshape(gy.shape)
            )
        if occupied.any():
            self.dist = ndimage.distance_transform_edt(~occupied, sampling=cell)
        else:
            self.dist = np.full((ny, nx), np.inf)

    def query(self, x: float, y: float) -> float:
        ix = int(round((x - self.x0) / self.cell))
        iy = int(round((y - self.y0) / self.cell))
        iy = min(max(iy, 0), self.dist.shape[0] - 1)
        ix = min(max(ix, 0), self.dist.shape[1] - 1)
        return float(self.dist[iy, ix])

    def query_many(self, xy: np.ndarray) -> np.ndarray:
        ix = np.rint((xy[:, 0] - self.x0) / self.cell).astype(int)
        iy = np.rint((xy[:, 1] - self.y0) / self.cell).astype(int)
        np.clip(ix, 0, self.dist.shape[1] - 1, out=ix)
        np.clip(iy, 0, self.dist.shape[0] - 1, out=iy)
        return self.dist[iy, ix]


def _points_near_polygon(pts: np.ndarray, poly: Polygon, radius: float) -> np.ndarray:
    """Vectorized: which points are inside the polygon or within `radius` of its boundary."""
    v = poly.vertices
    n = len(v)
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    j = n - 1
    for i in range(n):
        xi, yi = v[i]
        xj, yj = v[j]
        spans = (yi > y) != (yj > y)  # horizontal edges never span
        if yj != yi:
            crossing = spans & (x < (xj - xi) * (y - yi) / (yj - yi) + xi)
            inside ^= crossing
        j = i
    near = inside
    min_d2 = np.full(len(pts), np.inf)
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        ab = b - a
        denom = float(ab @ ab)
        t = ((pts - a) @ ab) / denom if denom > 0 else np.zeros(len(pts))
        t = np.clip(t, 0.0, 1.0)
        proj = a + t[:, None] * ab
        d2 = np.sum((pts - proj) ** 2, axis=1)
        np.minimum(min_d2, d2, out=min_d2)
    return near | (min_d2 <= radius * radius)


def _convex_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two convex CCW vertex arrays; touching counts as overlap."""
    for verts in (a, b):
        edges = np.roll(verts, -1, axis=0) - verts
        normals = np.stack([-edges[:, 1], edges[:, 0]], axis=1)
        pa = a @ normals.T
        pb = b @ normals.T
        if np.any(pa.max(axis=0) < pb.min(axis=0) - 1e-12) or np.any(
            pb.max(axis=0) < pa.min(axis=0) - 1e-12
        ):
            return False
    return True


@dataclass
class TaskMap:
    """Rectangular workspace with polygonal obstacles."""

    bounds: tuple[float, float, float, float]  # (xmin, ymin, xmax, ymax)
    obstacles: list[Polygon]
    map_id: str = "map"
    seed: int | None = None
    style: str | None = None
    _caches: dict = field(default_factory=dict, repr=False, compare=False)

    def validate(self) -> "TaskMap":
        x0, y0, x1, y1 = self.bounds
        if not (x1 > x0 and y1 > y0):
            raise ConfigError(f"map bounds {self.bounds} are empty")
        for i, poly in enumerate(self.obstacles):
            poly.validate()
            pxmin, pymin, pxmax, pymax = poly.aabb()
            if pxmin < x0 - 1e-9 or pymin < y0 - 1e-9 or pxmax > x1 + 1e-9 or pymax > y1 + 1e-9:
                raise ConfigError(f"obstacle {i} leaves the map bounds")
        for i in range(len(self.obstacles)):
            for j in range(i + 1, len(self.obstacles)):
                if polygons_intersect(self.obstacles[i], self.obstacles[j]):
                    raise ConfigError(f"obstacles {i} and {j} overlap")
        return self

    # -- cached query structures ------------------------------------------

    def clearance_grid(self) -> ClearanceGrid:
        if "grid" not in self._caches:
            self._caches["grid"] = ClearanceGrid(self.bounds, self.obstacles)
        return self._caches["grid"]

    def obstacle_aabbs(self) -> np.ndarray:
        if "aabbs" not in self._caches:
            self._caches["aabbs"] = np.array([p.aabb() for p in self.obstacles]).reshape(-1, 4)
        return self._caches["aabbs"]

    def convex_pieces(self) -> list[Polygon]:
        """Convex decomposition of every obstacle, flattened."""
        if "pieces" not in self._caches:
            pieces: list[Polygon] = []
            for poly in self.obstacles:
                pieces.extend(convex_decompose(poly))
            self._caches["pieces"] = pieces
        return self._caches["pieces"]

    def centroids(self) -> np.ndarray:
        """(N_obs, 2) geometric centers of the original obstacles."""
        if "centroids" not in self._caches:
            if self.obstacles:
                self._caches["centroids"] = np.array([p.centroid() for p in self.obstacles])
            else:
                self._caches["centroids"] = np.zeros((0, 2))
        return self._caches["centroids"]

    def contains_xy(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.bounds
        return x0 <= x <= x1 and y0 <= y <= y1

    # -- collision queries --------------------------------------------------

    def footprint_clear(self, pose: Pose2, params: VehicleParams) -> bool:
        """Exact footprint-vs-obstacles test with a fast clearance-grid reject."""
        if not self.obstacles:
            return True
        r_far = _circumradius(params) + 2.0 * _GRID_CELL
        if self.clearance_grid().query(pose.x, pose.y) >= r_far:
            return True
        corners = _pose_corners(np.array([[pose.x, pose.y, pose.theta]]), params)[0]
        return not self._corners_hit(corners)

    def poses_clear(self, poses: np.ndarray, params: VehicleParams) -> np.ndarray:
        """Vectorized footprint_clear over an (N, 3) pose array."""
        n = len(poses)
        out = np.ones(n, dtype=bool)
        if not self.obstacles or n == 0:
            return out
        r_far = _circumradius(params) + 2.0 * _GRID_CELL
        near = self.clearance_grid().query_many(poses[:, :2]) < r_far
        if not near.any():
            return out
        corners = _pose_corners(poses[near], params)
        out[np.flatnonzero(near)[self._sat_hits(corners)]] = False
        return out

    def _corners_hit(self, corners: np.ndarray) -> bool:
        return bool(self._sat_hits(corners[None, :, :])[0])

    def _piece_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Convex pieces padded to (Q, Vmax, 2) plus their edge normals and AABBs."""
        if "piece_arrays" not in self._caches:
            pieces = self.convex_pieces()
            vmax = max(len(p) for p in pieces)
            verts = np.empty((len(pieces), vmax, 2))
            for i, p in enumerate(pieces):
                v = p.vertices
                verts[i, : len(v)] = v
                verts[i, len(v):] = v[-1]  # repeated vertices leave the hull unchanged
            edges = np.roll(verts, -1, axis=1) - verts
            normals = np.stack([-edges[..., 1], edges[..., 0]], axis=-1)  # (Q, Vmax, 2)
            aabbs = np.stack([
                verts[..., 0].min(axis=1), verts[..., 1].min(axis=1),
                verts[..., 0].max(axis=1), verts[..., 1].max(axis=1),
            ], axis=1)
            self._caches["piece_arrays"] = (verts, normals, aabbs)
        return self._caches["piece_arrays"]

    def _sat_hits(self, corners: np.ndarray) -> np.ndarray:
        """Exact SAT overlap of (N, 4, 2) footprints against every convex piece -> (N,)."""
        verts, normals, aabbs = self._piece_arrays()
        fx0 = corners[..., 0].min(axis=1)
        fx1 = corners[..., 0].max(axis=1)
        fy0 = corners[..., 1].min(axis=1)
        fy1 = corners[..., 1].max(axis=1)
        boxed = ~(
            (aabbs[None, :, 2] < fx0[:, None]) | (fx1[:, None] < aabbs[None, :, 0])
            | (aabbs[None, :, 3] < fy0[:, None]) | (fy1[:, None] < aabbs[None, :, 1])
        )  # (N, Q)
        if not boxed.any():
            return np.zeros(len(corners), dtype=bool)

        # piece-edge axes: project footprint corners and piece vertices
        proj_f = np.einsum("nkc,qvc->nqvk", corners, normals)  # (N, Q, Vmax, 4)
        proj_p = np.einsum("qwc,qvc->qvw", verts, normals)  # (Q, Vmax, Vmax)
        sep_on_piece = (
            (proj_f.max(axis=3) < proj_p.min(axis=2)[None] - 1e-12)
            | (proj_p.max(axis=2)[None] < proj_f.min(axis=3) - 1e-12)
        ).any(axis=2)  # (N, Q)

        # footprint-edge axes
        f_edges = np.roll(corners, -1, axis=1) - corners
        f_normals = np.stack([-f_edges[..., 1], f_edges[..., 0]], axis=-1)  # (N, 4, 2)
        proj_ff = np.einsum("nkc,nec->nek", corners, f_normals)  # (N, 4edges, 4)
        proj_pf = np.einsum("qvc,nec->nqev", verts, f_normals)  # (N, Q, 4, Vmax)
        sep_on_foot = (
            (proj_pf.max(axis=3) < proj_ff.min(axis=2)[:, None] - 1e-12)
            | (proj_ff.max(axis=2)[:, None] < proj_pf.min(axis=3) - 1e-12)
        ).any(axis=2)  # (N, Q)

        return (boxed & ~sep_on_piece & ~sep_on_foot).any(axis=1)

    def _pieces_of(self, obstacle_index: int) -> list[Polygon]:
        if "pieces_by_obs" not in self._caches:
            self._caches["pieces_by_obs"] = [convex_decompose(p) for p in self.obstacles]
        return self._caches["pieces_by_obs"][obstacle_index]

    def footprint_clearance(self, pose: Pose2, params: VehicleParams) -> float:
        """Exact minimum distance from the footprint to any obstacle (0 on contact)."""
        if not self.obstacles:
            return math.inf
        corners = _pose_corners(np.array([[pose.x, pose.y, pose.theta]]), params)[0]
        fp = Polygon(corners)
        return min(polygon_distance(fp, obs) for obs in self.obstacles)

    def point_clearance(self, x: float, y: float) -> float:
        if not self.obstacles:
            return math.inf
        return min(point_polygon_distance((x, y), obs) for obs in self.obstacles)

    # -- serialization --------------------------------------------------------

    def to_json_dict(self) -> dict:
        d = {
            "schema": MAP_SCHEMA,
            "id": self.map_id,
            "bounds": list(self.bounds),
            "obstacles": [p.vertices.tolist() for p in self.obstacles],
        }
        if self.seed is not None:
            d["seed"] = self.seed
        if self.style is not None:
            d["style"] = self.style
        return d

    @staticmethod
    def from_json_dict(d: dict) -> "TaskMap":
        if d.get("schema") != MAP_SCHEMA:
            raise ConfigError(f"unsupported map schema {d.get('schema')!r}")
        m = TaskMap(
            bounds=tuple(float(b) for b in d["bounds"]),
            obstacles=[Polygon(np.array(v)) for v in d["obstacles"]],
            map_id=str(d["id"]),
            seed=d.get("seed"),
            style=d.get("style"),
        )
        return m.validate()

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_caches"] = {}  # query caches are rebuilt in each process
        return state


@dataclass(frozen=True)
class PlanningTask:
    """Start and goal configurations on a map."""

    start: Pose2
    goal: Pose2

    def to_json_dict(self) -> dict:
        return {"start": list(self.start), "goal": list(self.goal)}

    @staticmethod
    def from_json_dict(d: dict) -> "PlanningTask":
        return PlanningTask(Pose2(*map(float, d["start"])), Pose2(*map(float, d["goal"])))


def _circumradius(params: VehicleParams) -> float:
    corners = params.body_corners()
    return float(np.max(np.hypot(corners[:, 0], corners[:, 1])))


def _pose_corners(poses: np.ndarray, params: VehicleParams) -> np.ndarray:
    """Footprint corners for an (N, 3) pose array -> (N, 4, 2)."""
    body = params.body_corners()
    c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
    rot = np.empty((len(poses), 2, 2))
    rot[:, 0, 0] = c
    rot[:, 0, 1] = s
    rot[:, 1, 0] = -s
    rot[:, 1, 1] = c
    return body[None, :, :] @ rot + poses[:, None, :2]
