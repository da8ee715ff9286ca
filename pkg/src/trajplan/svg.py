"""Dependency-free SVG rendering of maps, footprints, and trajectories."""

from __future__ import annotations

import numpy as np

from .trajectory import TimedTrajectory
from .vehicle import VehicleParams
from .world import TaskMap, PlanningTask, _pose_corners


def _poly_points(vertices) -> str:
    return " ".join(f"{x:.3f},{y:.3f}" for x, y in vertices)


class SvgCanvas:
    def __init__(self, bounds, size: int = 640, margin: float = 1.0):
        x0, y0, x1, y1 = bounds
        self.x0, self.y0 = x0 - margin, y0 - margin
        w = (x1 - x0) + 2 * margin
        h = (y1 - y0) + 2 * margin
        self.scale = size / max(w, h)
        self.width = w * self.scale
        self.height = h * self.scale
        self.parts: list[str] = []

    def _tx(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        out = np.empty_like(pts)
        out[:, 0] = (pts[:, 0] - self.x0) * self.scale
        out[:, 1] = self.height - (pts[:, 1] - self.y0) * self.scale  # y up
        return out

    def polygon(self, vertices, fill="#888", stroke="#444", opacity=1.0, stroke_width=1.0):
        self.parts.append(
            f'<polygon points="{_poly_points(self._tx(vertices))}" fill="{fill}" '
            f'stroke="{stroke}" stroke-width="{stroke_width}" fill-opacity="{opacity}"/>'
        )

    def polyline(self, pts, stroke="#06c", width=1.5, dash: str | None = None):
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline points="{_poly_points(self._tx(pts))}" fill="none" '
            f'stroke="{stroke}" stroke-width="{width}"{dash_attr}/>'
        )

    def circle(self, xy, r=3.0, fill="#c00"):
        p = self._tx([xy])[0]
        self.parts.append(f'<circle cx="{p[0]:.3f}" cy="{p[1]:.3f}" r="{r}" fill="{fill}"/>')

    def text(self, xy, s, size=12, fill="#222"):
        p = self._tx([xy])[0]
        self.parts.append(f'<text x="{p[0]:.1f}" y="{p[1]:.1f}" font-size="{size}" fill="{fill}">{s}</text>')

    def to_string(self) -> str:
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width:.0f}" '
            f'height="{self.height:.0f}" viewBox="0 0 {self.width:.3f} {self.height:.3f}">'
        )
        bg = f'<rect width="{self.width:.3f}" height="{self.height:.3f}" fill="#fff"/>'
        return "\n".join([head, bg, *self.parts, "</svg>"]) + "\n"


def render_plan(
    task_map: TaskMap,
    task: PlanningTask,
    params: VehicleParams,
    stage1: TimedTrajectory | None,
    final: TimedTrajectory | None,
    footprint_every: int = 10,
    title: str | None = None,
) -> str:
    """One plan as SVG: obstacles, stage-1 guess (dashed), final trajectory, footprints."""
    cv = SvgCanvas(task_map.bounds)
    for obs in task_map.obstacles:
        cv.polygon(obs.vertices, fill="#9aa0a6", stroke="#5f6368", opacity=0.85)
    if stage1 is not None:
        cv.polyline(stage1.positions(), stroke="#e37400", width=1.2, dash="5,4")
    if final is not None:
        corners = _pose_corners(final.states[:, :3], params)
        for k in range(0, len(corners), footprint_every):
            cv.polygon(corners[k], fill="none", stroke="#1a73e8", opacity=1.0, stroke_width=0.7)
        cv.polyline(final.positions(), stroke="#1a73e8", width=1.8)
    cv.circle((task.start.x, task.start.y), r=4, fill="#188038")
    cv.circle((task.goal.x, task.goal.y), r=4, fill="#d93025")
    if title:
        cv.text((task_map.bounds[0] + 0.5, task_map.bounds[3] - 0.5), title)
    return cv.to_string()
