import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajplan.errors import DegenerateGeometryError
from trajplan.geometry import (
    Polygon,
    Pose2,
    convex_decompose,
    from_frame,
    is_convex,
    normalize_angle,
    point_in_polygon_raycast,
    polygon_area,
    polygon_distance,
    polygons_intersect,
    to_frame,
    triangle_area,
    triangle_gap,
)

UNIT_SQUARE = Polygon(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))


def random_convex_polygon(rng, n_min=3, n_max=9, r_lo=0.5, r_hi=3.0):
    while True:
        n = int(rng.integers(n_min, n_max))
        angles = np.sort(rng.uniform(0, 2 * math.pi, n))
        if n >= 3 and np.min(np.diff(angles)) > 1e-2:
            radii = rng.uniform(r_lo, r_hi, n)
            poly = Polygon(np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1))
            if is_convex(poly) and abs(polygon_area(poly)) > 0.1:
                return poly


class TestPolygonArea:
    def test_unit_square(self):
        assert polygon_area(UNIT_SQUARE) == pytest.approx(1.0)

    def test_half_unit_triangle(self):
        tri = Polygon(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
        assert polygon_area(tri) == pytest.approx(0.5)

    def test_matches_fan_triangulation_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            poly = random_convex_polygon(rng, n_min=7, n_max=8)
            v = poly.vertices
            fan = sum(triangle_area(v[0], v[i], v[i + 1]) for i in range(1, len(v) - 1))
            assert polygon_area(poly) == pytest.approx(fan, abs=1e-9)

    def test_degenerate_raises(self):
        line = Polygon(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]))
        with pytest.raises(DegenerateGeometryError):
            polygon_area(line)

    def test_invariant_under_rotation_of_vertex_list(self):
        rng = np.random.default_rng(4)
        poly = random_convex_polygon(rng)
        a0 = polygon_area(poly)
        for k in range(1, len(poly)):
            rolled = Polygon(np.roll(poly.vertices, k, axis=0))
            assert polygon_area(rolled) == pytest.approx(a0, rel=1e-12)

    def test_invariant_under_rigid_transform(self):
        rng = np.random.default_rng(5)
        poly = random_convex_polygon(rng)
        a0 = polygon_area(poly)
        c, s = math.cos(0.7), math.sin(0.7)
        moved = Polygon(poly.vertices @ np.array([[c, s], [-s, c]]) + np.array([5.0, -3.0]))
        assert polygon_area(moved) == pytest.approx(a0, rel=1e-9)


class TestTriangleArea:
    def test_right_triangle(self):
        assert triangle_area((0, 0), (1, 0), (0, 1)) == pytest.approx(0.5)

    def test_collinear_is_zero(self):
        assert triangle_area((0, 0), (1, 1), (2, 2)) == 0.0

    def test_3_4_5(self):
        assert triangle_area((0, 0), (4, 0), (0, 3)) == pytest.approx(6.0)


class TestTriangleGap:
    def test_interior_point_zero(self):
        assert triangle_gap((0.5, 0.5), UNIT_SQUARE) == pytest.approx(0.0, abs=1e-12)

    def test_exterior_point_hand_computed(self):
        # fan areas for p=(2, 0.5): 0.25 + 0.5 + 0.25 + 1.0 = 2.0; gap = 2.0 - 1.0
        p = (2.0, 0.5)
        v = UNIT_SQUARE.vertices
        fan = sum(triangle_area(p, v[i], v[(i + 1) % 4]) for i in range(4))
        assert fan == pytest.approx(2.0)
        assert triangle_gap(p, UNIT_SQUARE) == pytest.approx(1.0)

    def test_sign_agrees_with_raycast_oracle(self):
        rng = np.random.default_rng(11)
        poly = random_convex_polygon(rng)
        checked = 0
        while checked < 1000:
            p = rng.uniform(-4, 4, 2)
            gap = triangle_gap(p, poly)
            if abs(gap) < 1e-9:
                continue
            assert (gap <= 0.0) == point_in_polygon_raycast(p, poly)
            checked += 1

    def test_interior_gap_below_relative_tolerance(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            poly = random_convex_polygon(rng)
            c = poly.centroid()
            for _ in range(20):
                p = c + rng.uniform(-0.05, 0.05, 2)
                if point_in_polygon_raycast(p, poly):
                    assert triangle_gap(p, poly) < 1e-9 * polygon_area(poly)


class TestRaycast:
    def test_inside(self):
        assert point_in_polygon_raycast((0.5, 0.5), UNIT_SQUARE)

    def test_outside(self):
        assert not point_in_polygon_raycast((1.5, 0.5), UNIT_SQUARE)


class TestPolygonsIntersect:
    def test_offset_squares_disjoint(self):
        other = Polygon(UNIT_SQUARE.vertices + np.array([2.0, 0.0]))
        assert not polygons_intersect(UNIT_SQUARE, other)

    def test_identical_squares(self):
        assert polygons_intersect(UNIT_SQUARE, UNIT_SQUARE)

    def test_cross_overlap_without_contained_vertices(self):
        # two long thin rectangles crossing: no vertex of one inside the other
        horiz = Polygon(np.array([[-3.0, -0.1], [3.0, -0.1], [3.0, 0.1], [-3.0, 0.1]]))
        vert = Polygon(np.array([[-0.1, -3.0], [0.1, -3.0], [0.1, 3.0], [-0.1, 3.0]]))
        assert not any(point_in_polygon_raycast(v, vert) for v in horiz.vertices)
        assert polygons_intersect(horiz, vert)

    def test_symmetry(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            a = random_convex_polygon(rng)
            b = Polygon(random_convex_polygon(rng).vertices + rng.uniform(-3, 3, 2))
            assert polygons_intersect(a, b) == polygons_intersect(b, a)


class TestFrames:
    def test_identity_frame(self):
        p = Pose2(1.0, 2.0, 0.5)
        assert to_frame(p, Pose2(0, 0, 0)) == p

    def test_self_frame_is_origin(self):
        f = Pose2(3.0, -1.0, 0.8)
        out = to_frame(f, f)
        assert out.x == pytest.approx(0.0, abs=1e-12)
        assert out.y == pytest.approx(0.0, abs=1e-12)
        assert out.theta == pytest.approx(0.0, abs=1e-12)

    def test_round_trip_random(self):
        rng = np.random.default_rng(17)
        worst = 0.0
        for _ in range(1000):
            p = Pose2(*rng.uniform(-50, 50, 2), rng.uniform(-math.pi, math.pi))
            f = Pose2(*rng.uniform(-50, 50, 2), rng.uniform(-math.pi, math.pi))
            rt = from_frame(to_frame(p, f), f)
            worst = max(worst, abs(rt.x - p.x), abs(rt.y - p.y), abs(rt.theta - p.theta))
        assert worst < 1e-9


class TestConvexDecompose:
    def test_convex_passthrough(self):
        assert len(convex_decompose(UNIT_SQUARE)) == 1

    def test_star_pieces_cover_area(self):
        star = Polygon(np.array([
            [2, 0], [0.5, 0.5], [0, 2], [-0.5, 0.5], [-2, 0], [-0.5, -0.5], [0, -2], [0.5, -0.5],
        ], dtype=float)).validate()
        pieces = convex_decompose(star)
        assert len(pieces) >= 2
        assert all(is_convex(q) for q in pieces)
        assert sum(polygon_area(q) for q in pieces) == pytest.approx(polygon_area(star), abs=1e-9)

    def test_random_stars(self):
        rng = np.random.default_rng(23)
        for _ in range(40):
            n = int(rng.integers(3, 6))
            outer = rng.uniform(1.5, 3.0)
            inner = outer * rng.uniform(0.4, 0.7)
            base = rng.uniform(0, 2 * math.pi)
            pts = []
            for i in range(2 * n):
                r = outer if i % 2 == 0 else inner
                a = base + math.pi * i / n
                pts.append([r * math.cos(a), r * math.sin(a)])
            poly = Polygon(np.array(pts)).validate()
            pieces = convex_decompose(poly)
            assert all(is_convex(q) for q in pieces)
            assert sum(polygon_area(q) for q in pieces) == pytest.approx(polygon_area(poly), abs=1e-9)


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-10, 10))
@settings(max_examples=100, deadline=None)
def test_frame_round_trip_property(x, y, theta):
    p = Pose2(x, y, theta)
    f = Pose2(3.0, -7.0, 1.1)
    rt = from_frame(to_frame(p, f), f)
    assert abs(rt.x - x) < 1e-9 and abs(rt.y - y) < 1e-9 and abs(rt.theta - theta) < 1e-9


@given(st.floats(-30, 30))
@settings(max_examples=200, deadline=None)
def test_normalize_angle_range(theta):
    t = normalize_angle(theta)
    assert -math.pi < t <= math.pi
    assert math.isclose(math.sin(t), math.sin(theta), abs_tol=1e-9)
    assert math.isclose(math.cos(t), math.cos(theta), abs_tol=1e-9)


def test_triangle_gap_finite_difference_smoothness():
    # continuous and piecewise-smooth away from the triangle support lines
    rng = np.random.default_rng(29)
    poly = random_convex_polygon(rng)
    h = 1e-6
    for _ in range(25):
        p = rng.uniform(-4, 4, 2)
        if abs(triangle_gap(p, poly)) < 1e-3:
            continue
        gx = (triangle_gap((p[0] + h, p[1]), poly) - triangle_gap((p[0] - h, p[1]), poly)) / (2 * h)
        gy = (triangle_gap((p[0], p[1] + h), poly) - triangle_gap((p[0], p[1] - h), poly)) / (2 * h)
        assert math.isfinite(gx) and math.isfinite(gy)


def test_polygon_distance():
    other = Polygon(UNIT_SQUARE.vertices + np.array([3.0, 0.0]))
    assert polygon_distance(UNIT_SQUARE, other) == pytest.approx(2.0)
    assert polygon_distance(UNIT_SQUARE, UNIT_SQUARE) == 0.0


def test_polygon_validate_rejects_cw_and_self_intersecting():
    with pytest.raises(DegenerateGeometryError):
        Polygon(UNIT_SQUARE.vertices[::-1]).validate()  # clockwise
    bowtie = Polygon(np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]))
    with pytest.raises(DegenerateGeometryError):
        bowtie.validate()
