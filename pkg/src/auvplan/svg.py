"""Plain x-y projection plots written as standalone SVG."""

from __future__ import annotations

from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .path import Obstacle, SampledPath

STYLE = """
.obstacle { fill: #d9534f; fill-opacity: 0.35; stroke: #a94442; stroke-width: 1; }
.path { fill: none; stroke: #1f77b4; stroke-width: 2; }
.control { fill: none; stroke: #999999; stroke-width: 1; stroke-dasharray: 4 3; }
.waypoint { fill: #222222; }
.label { font: 12px sans-serif; fill: #222222; }
"""

WIDTH = 800
MARGIN = 30


class _Canvas:
    """World-to-pixel mapping with y pointing up and equal axis scale."""

    def __init__(self, points: np.ndarray, width: int = WIDTH, margin: int = MARGIN):
        lo = points.min(axis=0)
        hi = points.max(axis=0)
        span = np.maximum(hi - lo, 1e-9)
        self.scale = (width - 2 * margin) / float(span.max())
        self.lo = lo
        self.margin = margin
        self.width = width
        self.height = int(round(2 * margin + span[1] * self.scale))

    def xy(self, p: Sequence[float]) -> tuple[float, float]:
        x = self.margin + (p[0] - self.lo[0]) * self.scale
        y = self.height - self.margin - (p[1] - self.lo[1]) * self.scale
        return round(float(x), 3), round(float(y), 3)

    def length(self, d: float) -> float:
        return round(float(d) * self.scale, 3)


def _polyline(canvas: _Canvas, pts: np.ndarray, cls: str) -> str:
    coords = " ".join(f"{x},{y}" for x, y in (canvas.xy(p) for p in pts))
    return f'<polyline class="{cls}" points="{coords}"/>'


def render(
    paths: Sequence[SampledPath],
    obstacles: Iterable[Obstacle] = (),
    waypoints: Sequence[tuple[int, Sequence[float]]] = (),
    title: str = "",
    show_control: bool = False,
) -> str:
    obstacles = list(obstacles)
    extent = [p.samples[:, :2] for p in paths]
    extent += [np.asarray([w[1][:2]]) for w in waypoints]
    for o in obstacles:
        c = np.asarray(o.position[:2])
        extent.append(np.vstack([c - o.collision_radius, c + o.collision_radius]))
    canvas = _Canvas(np.vstack(extent) if extent else np.zeros((1, 2)))

    body = []
    for o in obstacles:
        cx, cy = canvas.xy(o.position)
        body.append(
            f'<circle class="obstacle" data-kind="{o.kind.value}" cx="{cx}" cy="{cy}" '
            f'r="{canvas.length(o.collision_radius)}"/>'
        )
    for p in paths:
        if show_control:
            body.append(_polyline(canvas, p.control_points, "control"))
        body.append(_polyline(canvas, p.samples, "path"))
    for wid, pos in waypoints:
        x, y = canvas.xy(pos)
        body.append(f'<rect class="waypoint" x="{x - 3}" y="{y - 3}" width="6" height="6"/>')
        body.append(f'<text class="label" x="{x + 5}" y="{y - 5}">{wid}</text>')
    if title:
        body.append(f'<text class="label" x="{MARGIN}" y="{MARGIN // 2 + 4}">{escape(title)}</text>')

    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{canvas.width}" '
        f'height="{canvas.height}" viewBox="0 0 {canvas.width} {canvas.height}">\n'
        f"<style>{STYLE}</style>\n" + "\n".join(body) + "\n</svg>\n"
    )
