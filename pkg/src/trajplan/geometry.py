"""Planar geometry primitives: polygons, areas, containment tests, frame transforms.

The collision primitive used by the optimizer is the fan-triangle gap: a point
sits inside a convex polygon exactly when the triangles it forms with every
edge sum to the polygon area.  A classic ray-casting test and a full
polygon-overlap test are kept alongside as independent oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .errors import DegenerateGeometryError

# Below this signed area a polygon is considered collapsed (double-precision
# shoelace noise floor).
DEGENERATE_AREA = 1e-12

# |gap| below this counts as "on the boundary" for containment classification.
BOUNDARY_TOL = 1e-9

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    t = math.fmod(theta + math.pi, TWO_PI)
    if t <= 0.0:
        t += TWO_PI
    return t - math.pi


class Point2(NamedTuple):
    x: float
    y: float


class Pose2(NamedTuple):
    """Planar pose (x, y, heading).  Heading in radians.

    The tuple does not normalize on construction so that continuous heading
    profiles (multiple turns) survive round trips; use :meth:`normalized`
    where the (-pi, pi] invariant is required.
    """

    x: float
    y: float
    theta: float

    def normalized(self) -> "Pose2":
        return Pose2(self.x, self.y, normalize_angle(self.theta))


@dataclass(frozen=True)
class Polygon:
    """Simple polygon with CCW vertex order, vertices as an (N, 2) float array.

    Construction is cheap; call :meth:`validate` at trust boundaries (map
    loading, map generation).  Hot paths (footprints) skip validation.
    """

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise DegenerateGeometryError(f"polygon vertices must be (N, 2), got {v.shape}")
        object.__setattr__(self, "vertices", v)

    def __len__(self) -> int:
        return len(self.vertices)

    def validate(self) -> "Polygon":
        """Check all invariants: >=3 vertices, finite, CCW, simple, non-degenerate."""
        v = self.vertices
        if len(v) < 3:
            raise DegenerateGeometryError("polygon needs at least 3 vertices")
        if not np.all(np.isfinite(v)):
            raise DegenerateGeometryError("polygon has non-finite coordinates")
        area = signed_area(v)
        if area <= DEGENERATE_AREA:
            raise DegenerateGeometryError(
                f"polygon signed area {area:g} is not positive (CW or degenerate)"
            )
        if not _is_simple(v):
            raise DegenerateGeometryError("polygon is self-intersecting")
        return self

    def aabb(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the vertex set."""
        v = self.vertices
        return (v[:, 0].min(), v[:, 1].min(), v[:, 0].max(), v[:, 1].max())

    def centroid(self) -> np.ndarray:
        """Arithmetic mean of the vertices (the 'geometric center' used by the clearance cost)."""
        return self.vertices.mean(axis=0)

    def edges(self) -> Iterable[tuple[np.ndarray, np.ndarray]]:
        v = self.vertices
        for i in range(len(v)):
            yield v[i], v[(i + 1) % len(v)]


def signed_area(vertices: np.ndarray) -> float:
    """Shoelace signed area; positive for CCW order."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def polygon_area(poly: Polygon) -> float:
    """Positive shoelace area of a valid CCW polygon.

    Raises DegenerateGeometryError when the area collapses below the noise
    floor.
    """
    area = signed_area(poly.vertices)
    if abs(area) < DEGENERATE_AREA:
        raise DegenerateGeometryError(f"degenerate polygon, area {area:g}")
    return abs(area)


def triangle_area(a, b, c) -> float:
    """Unsigned area of triangle abc: |cross(b-a, c-a)| / 2.  Collinear -> 0."""
    ax, ay = a
    bx, by = b
    cx, cy = c
    return 0.5 * abs((bx - ax) * (cy - ay) - (by - ay) * (cx - ax))


def triangle_gap(p, poly: Polygon) -> float:
    """Fan-triangle area excess of point p over the polygon area.

    gap = sum_i area(p, v_i, v_{i+1}) - area(poly).  For a convex polygon the
    gap is 0 (within BOUNDARY_TOL) iff p lies inside or on the boundary and
    strictly positive iff p lies strictly outside.
    """
    v = poly.vertices
    px, py = p
    dx = v[:, 0] - px
    dy = v[:, 1] - py
    cross = dx * np.roll(dy, -1) - dy * np.roll(dx, -1)
    fan = 0.5 * float(np.sum(np.abs(cross)))
    return fan - polygon_area(poly)


def point_in_polygon_raycast(p, poly: Polygon) -> bool:
    """Even-odd rule containment test.

    True iff p is strictly inside.  Points exactly on the boundary may
    classify either way; callers needing boundary awareness must test that
    separately.
    """
    px, py = p
    v = poly.vertices
    n = len(v)
    inside = False
    j = n - 1
    for i in range(n):
        xi, yi = v[i]
        xj, yj = v[j]
        if (yi > py) != (yj > py) and px < (xj - xi) * (py - yi) / (yj - yi) + xi:
            inside = not inside
        j = i
    return inside


def _orient(ax, ay, bx, by, cx, cy) -> float:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _on_segment(ax, ay, bx, by, px, py) -> bool:
    # p assumed collinear with a-b
    return min(ax, bx) - 1e-12 <= px <= max(ax, bx) + 1e-12 and min(ay, by) - 1e-12 <= py <= max(ay, by) + 1e-12


def segments_intersect(p1, p2, q1, q2) -> bool:
    """True iff closed segments p1p2 and q1q2 share at least one point."""
    ax, ay = p1
    bx, by = p2
    cx, cy = q1
    dx, dy = q2
    d1 = _orient(cx, cy, dx, dy, ax, ay)
    d2 = _orient(cx, cy, dx, dy, bx, by)
    d3 = _orient(ax, ay, bx, by, cx, cy)
    d4 = _orient(ax, ay, bx, by, dx, dy)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    if d1 == 0 and _on_segment(cx, cy, dx, dy, ax, ay):
        return True
    if d2 == 0 and _on_segment(cx, cy, dx, dy, bx, by):
        return True
    if d3 == 0 and _on_segment(ax, ay, bx, by, cx, cy):
        return True
    if d4 == 0 and _on_segment(ax, ay, bx, by, dx, dy):
        return True
    return False


def _is_simple(v: np.ndarray) -> bool:
    n = len(v)
    for i in range(n):
        a1, a2 = v[i], v[(i + 1) % n]
        for j in range(i + 1, n):
            # skip edges sharing a vertex with edge i
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue
            if segments_intersect(a1, a2, v[j], v[(j + 1) % n]):
                return False
    return True


def polygons_intersect(a: Polygon, b: Polygon) -> bool:
    """Ground-truth overlap test: boundary crossing or vertex containment.

    Symmetric in its arguments.  This catches the pure edge-crossing overlaps
    that a vertex-containment test alone misses, so it is the oracle used to
    audit final trajectories.
    """
    axmin, aymin, axmax, aymax = a.aabb()
    bxmin, bymin, bxmax, bymax = b.aabb()
    if axmax < bxmin or bxmax < axmin or aymax < bymin or bymax < aymin:
        return False
    va, vb = a.vertices, b.vertices
    na, nb = len(va), len(vb)
    for i in range(na):
        p1, p2 = va[i], va[(i + 1) % na]
        for j in range(nb):
            if segments_intersect(p1, p2, vb[j], vb[(j + 1) % nb]):
                return True
    if point_in_polygon_raycast(va[0], b) or point_in_polygon_raycast(vb[0], a):
        return True
    return False


def segment_segment_distance(p1, p2, q1, q2) -> float:
    """Euclidean distance between two closed segments (0 when they intersect)."""
    if segments_intersect(p1, p2, q1, q2):
        return 0.0
    return min(
        _point_segment_distance(p1, q1, q2),
        _point_segment_distance(p2, q1, q2),
        _point_segment_distance(q1, p1, p2),
        _point_segment_distance(q2, p1, p2),
    )


def _point_segment_distance(p, a, b) -> float:
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.hypot(*(p - a)))
    t = float((p - a) @ ab) / denom
    t = min(1.0, max(0.0, t))
    return float(np.hypot(*(p - (a + t * ab))))


def polygon_distance(a: Polygon, b: Polygon) -> float:
    """Minimum distance between two polygons; 0 when they overlap."""
    if polygons_intersect(a, b):
        return 0.0
    best = math.inf
    va, vb = a.vertices, b.vertices
    na, nb = len(va), len(vb)
    for i in range(na):
        for j in range(nb):
            d = segment_segment_distance(va[i], va[(i + 1) % na], vb[j], vb[(j + 1) % nb])
            if d < best:
                best = d
    return best


def point_polygon_distance(p, poly: Polygon) -> float:
    """Distance from a point to a polygon (0 when inside or on the boundary)."""
    if point_in_polygon_raycast(p, poly):
        return 0.0
    v = poly.vertices
    n = len(v)
    return min(_point_segment_distance(p, v[i], v[(i + 1) % n]) for i in range(n))


# ---------------------------------------------------------------------------
# Rigid frame transforms
# ---------------------------------------------------------------------------

def to_frame(p: Pose2, frame: Pose2) -> Pose2:
    """Express world pose p in the coordinate frame anchored at `frame`."""
    c, s = math.cos(frame.theta), math.sin(frame.theta)
    dx, dy = p.x - frame.x, p.y - frame.y
    return Pose2(c * dx + s * dy, -s * dx + c * dy, p.theta - frame.theta)


def from_frame(p: Pose2, frame: Pose2) -> Pose2:
    """Inverse of :func:`to_frame`: map a frame-local pose back to the world."""
    c, s = math.cos(frame.theta), math.sin(frame.theta)
    return Pose2(
        frame.x + c * p.x - s * p.y,
        frame.y + s * p.x + c * p.y,
        p.theta + frame.theta,
    )


def to_frame_xy(points: np.ndarray, frame: Pose2) -> np.ndarray:
    """Transform an (N, 2) array of world points into the frame."""
    pts = np.asarray(points, dtype=float)
    c, s = math.cos(frame.theta), math.sin(frame.theta)
    d = pts - np.array([frame.x, frame.y])
    return d @ np.array([[c, -s], [s, c]])


def from_frame_xy(points: np.ndarray, frame: Pose2) -> np.ndarray:
    """Transform an (N, 2) array of frame-local points back to the world."""
    pts = np.asarray(points, dtype=float)
    c, s = math.cos(frame.theta), math.sin(frame.theta)
    return pts @ np.array([[c, s], [-s, c]]) + np.array([frame.x, frame.y])


# ---------------------------------------------------------------------------
# Convex decomposition
# ---------------------------------------------------------------------------

def is_convex(poly: Polygon, tol: float = 1e-12) -> bool:
    """True iff every CCW turn is non-negative (collinear runs allowed)."""
    v = poly.vertices
    n = len(v)
    for i in range(n):
        a, b, c = v[i], v[(i + 1) % n], v[(i + 2) % n]
        if _orient(a[0], a[1], b[0], b[1], c[0], c[1]) < -tol:
            return False
    return True


def _ear_clip(v: np.ndarray) -> list[list[int]]:
    """Triangulate a simple CCW polygon; returns index triples."""
    idx = list(range(len(v)))
    tris: list[list[int]] = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10000:
            raise DegenerateGeometryError("ear clipping failed to converge")
        n = len(idx)
        clipped = False
        for k in range(n):
            i0, i1, i2 = idx[(k - 1) % n], idx[k], idx[(k + 1) % n]
            a, b, c = v[i0], v[i1], v[i2]
            if _orient(a[0], a[1], b[0], b[1], c[0], c[1]) <= 1e-12:
                continue  # reflex or collinear corner: not an ear
            ear = True
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                if _point_in_triangle(v[j], a, b, c):
                    ear = False
                    break
            if ear:
                tris.append([i0, i1, i2])
                idx.pop(k)
                clipped = True
                break
        if not clipped:
            raise DegenerateGeometryError("no ear found; polygon may be non-simple")
    tris.append(list(idx))
    return tris


def _point_in_triangle(p, a, b, c) -> bool:
    d1 = _orient(a[0], a[1], b[0], b[1], p[0], p[1])
    d2 = _orient(b[0], b[1], c[0], c[1], p[0], p[1])
    d3 = _orient(c[0], c[1], a[0], a[1], p[0], p[1])
    return d1 >= -1e-12 and d2 >= -1e-12 and d3 >= -1e-12


def convex_decompose(poly: Polygon) -> list[Polygon]:
    """Split a simple polygon into convex pieces using its own vertices.

    Convex input is returned as-is.  Otherwise the polygon is ear-clipped and
    adjacent triangles are greedily merged back while the union stays convex,
    which keeps the piece count well below n-2 in practice.
    """
    if is_convex(poly):
        return [poly]
    v = poly.vertices
    pieces = [list(t) for t in _ear_clip(v)]
    merged = True
    while merged:
        merged = False
        for i in range(len(pieces)):
            for j in range(i + 1, len(pieces)):
                union = _merge_if_convex(v, pieces[i], pieces[j])
                if union is not None:
                    pieces[i] = union
                    pieces.pop(j)
                    merged = True
                    break
            if merged:
                break
    return [Polygon(v[p]) for p in pieces]


def _merge_if_convex(v: np.ndarray, a: list[int], b: list[int]) -> list[int] | None:
    """Merge two index loops sharing exactly one edge if the union is convex."""
    shared = None
    na, nb = len(a), len(b)
    for i in range(na):
        e = (a[i], a[(i + 1) % na])
        for j in range(nb):
            if (b[j], b[(j + 1) % nb]) == (e[1], e[0]):
                shared = (i, j)
                break
        if shared:
            break
    if shared is None:
        return None
    i, j = shared
    # walk all of a starting after the shared edge, then b's interior chain
    union = [a[(i + 1 + k) % na] for k in range(na)]
    union += [b[(j + 1 + k) % nb] for k in range(1, nb - 1)]
    if is_convex(Polygon(v[union])):
        return union
    return None
