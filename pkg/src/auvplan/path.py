"""Local B-spline path planning between two waypoints among uncertain obstacles.

Geometry conventions
--------------------
Control-point bounds live in a window frame: axis 0 runs from start to
target, axis 1 is the horizontal perpendicular and axis 2 completes a
right-handed frame.  SIVs are the uniform fractions that place each interior
control point inside its box.

Obstacles are vertical columns: collision is tested on horizontal distance
to the obstacle centre, so a path cannot dodge an obstacle by changing depth.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import truncnorm

from .bbo import BboConfig, RateMode, TraceRecord, evolve

DEFAULT_CONTROL_POINTS = 8
DEFAULT_ORDER = 3
DEFAULT_SAMPLES = 100
MIN_OBSTACLE_RADIUS = 1.0
INITIAL_RADIUS_SIGMA = 100.0
DEFAULT_MOTION_SIGMA = 5.0
DEFAULT_RADIUS_SIGMA = 1.0
DEFAULT_CURRENT_SIGMA = 0.3

DEFAULT_PATH_CONFIG = BboConfig(
    population_size=50,
    max_iterations=100,
    keep_count=10,
    new_count=0,
    max_mutation_rate=0.1,
    rate_mode=RateMode.LINEAR_RANK,
)


class ObstacleKind(str, enum.Enum):
    STATIC_KNOWN = "static_known"
    QUASI_STATIC = "quasi_static"
    SELF_MOTIVATED = "self_motivated"
    CURRENT_AFFECTED = "current_affected"


@dataclass(frozen=True)
class Obstacle:
    kind: ObstacleKind
    position: tuple[float, float, float]
    radius: float
    radius_sigma: float = DEFAULT_RADIUS_SIGMA
    motion_sigma: float = DEFAULT_MOTION_SIGMA
    current_magnitude: float = 0.0
    # accumulated (current) or redrawn (quasi-static) growth on top of radius
    uncertainty: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ObstacleKind(self.kind))
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        if self.radius < 0:
            raise ValueError("obstacle radius must be non-negative")

    @property
    def collision_radius(self) -> float:
        return self.radius + self.uncertainty

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "position": list(self.position),
            "radius": self.radius,
            "radius_sigma": self.radius_sigma,
            "motion_sigma": self.motion_sigma,
            "current_magnitude": self.current_magnitude,
            "uncertainty": self.uncertainty,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Obstacle":
        return cls(**data)


@dataclass(frozen=True)
class ControlBounds:
    """Per-control-point boxes in the window frame plus the frame itself."""

    origin: np.ndarray
    axes: np.ndarray  # rows: longitudinal, lateral, vertical unit vectors
    lower: np.ndarray  # (n, 3) local coordinates
    upper: np.ndarray

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def to_world(self, local: np.ndarray) -> np.ndarray:
        return self.origin + np.asarray(local) @ self.axes


@dataclass
class ControlPolygon:
    points: np.ndarray

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclass
class PathWindow:
    start: np.ndarray
    target: np.ndarray
    speed: float
    n_control: int = DEFAULT_CONTROL_POINTS
    bounds: ControlBounds = field(init=False)

    def __post_init__(self) -> None:
        self.start = np.asarray(self.start, dtype=float)
        self.target = np.asarray(self.target, dtype=float)
        if not self.speed > 0:
            raise ValueError("vehicle speed must be positive")
        self.bounds = control_bounds(self.start, self.target, self.n_control)

    @property
    def chord(self) -> float:
        return float(np.linalg.norm(self.target - self.start))


@dataclass
class SampledPath:
    control_points: np.ndarray
    samples: np.ndarray
    length: float
    flight_time: float
    violation: float
    cost: float
    obstacles: tuple[Obstacle, ...] = ()

    def to_dict(self) -> dict:
        return {
            "control_points": self.control_points.tolist(),
            "samples": self.samples.tolist(),
            "length": self.length,
            "flight_time": self.flight_time,
            "violation": self.violation,
            "cost": self.cost,
            "obstacles": [o.to_dict() for o in self.obstacles],
        }


def _frame(start: np.ndarray, target: np.ndarray) -> np.ndarray:
    e1 = (target - start) / np.linalg.norm(target - start)
    e2 = np.cross([0.0, 0.0, 1.0], e1)
    if np.linalg.norm(e2) < 1e-9:
        e2 = np.cross([0.0, 1.0, 0.0], e1)
    e2 /= np.linalg.norm(e2)
    e3 = np.cross(e1, e2)
    return np.vstack([e1, e2, e3])


def control_bounds(start, target, n: int) -> ControlBounds:
    """Boxes for ``n`` control points between ``start`` and ``target``.

    Interior point ``i`` (1-based, ``2 <= i <= n - 1``) spans the fraction
    ``[(i-1)/(n-1), i/(n-1)]`` of the start-target distance along the axis and
    half that distance to either side laterally and vertically.  The first and
    last points are pinned.
    """
    if n < 3:
        raise ValueError("need at least 3 control points")
    start = np.asarray(start, dtype=float)
    target = np.asarray(target, dtype=float)
    dist = float(np.linalg.norm(target - start))
    if dist < 1e-9:
        raise ValueError("start and target coincide")
    lower = np.zeros((n, 3))
    upper = np.zeros((n, 3))
    half = dist / 2.0
    for k in range(1, n - 1):
        lower[k] = (k / (n - 1) * dist, -half, -half)
        upper[k] = ((k + 1) / (n - 1) * dist, half, half)
    lower[-1] = upper[-1] = (dist, 0.0, 0.0)
    return ControlBounds(origin=start, axes=_frame(start, target), lower=lower, upper=upper)


def polygon_from_fractions(bounds: ControlBounds, fractions: np.ndarray) -> ControlPolygon:
    """Interior control points at ``lower + fraction * (upper - lower)``."""
    frac = np.asarray(fractions, dtype=float).reshape(bounds.n - 2, 3)
    local = bounds.lower.copy()
    local[1:-1] = bounds.lower[1:-1] + frac * (bounds.upper[1:-1] - bounds.lower[1:-1])
    return ControlPolygon(bounds.to_world(local))


def sample_control_points(bounds: ControlBounds, rng: np.random.Generator) -> ControlPolygon:
    return polygon_from_fractions(bounds, rng.random((bounds.n - 2, 3)))


def clamped_knots(n: int, order: int) -> np.ndarray:
    interior = np.arange(1, n - order + 1) / (n - order + 1)
    return np.concatenate([np.zeros(order), interior, np.ones(order)])


@lru_cache(maxsize=64)
def basis_matrix(n: int, order: int, m: int) -> np.ndarray:
    """``(m, n)`` matrix of B-spline blending functions at ``m`` uniform parameters."""
    if n < order:
        raise ValueError("control point count must be at least the spline order")
    if m < 2:
        raise ValueError("need at least 2 samples")
    knots = clamped_knots(n, order)
    t = np.linspace(0.0, 1.0, m)
    nk = knots.size
    basis = np.zeros((m, nk - 1))
    for i in range(nk - 1):
        if knots[i] < knots[i + 1]:
            basis[:, i] = (knots[i] <= t) & (t < knots[i + 1])
    # close the last non-empty span so t = 1 is covered
    last = max(i for i in range(nk - 1) if knots[i] < knots[i + 1])
    basis[t == 1.0, last] = 1.0
    for k in range(2, order + 1):
        nxt = np.zeros((m, nk - k))
        for i in range(nk - k):
            d1 = knots[i + k - 1] - knots[i]
            d2 = knots[i + k] - knots[i + 1]
            if d1 > 0:
                nxt[:, i] += (t - knots[i]) / d1 * basis[:, i]
            if d2 > 0:
                nxt[:, i] += (knots[i + k] - t) / d2 * basis[:, i + 1]
        basis = nxt
    basis.setflags(write=False)
    return basis


def evaluate_bspline(
    polygon: ControlPolygon | np.ndarray,
    order: int = DEFAULT_ORDER,
    sample_count: int = DEFAULT_SAMPLES,
) -> np.ndarray:
    points = polygon.points if isinstance(polygon, ControlPolygon) else np.asarray(polygon)
    return basis_matrix(points.shape[0], order, sample_count) @ points


def path_metrics(samples: np.ndarray, speed: float) -> tuple[float, float]:
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    if not speed > 0:
        raise ValueError("speed must be positive")
    length = float(np.linalg.norm(np.diff(samples, axis=0), axis=1).sum())
    return length, length / speed


def _disk_arrays(obstacles: Sequence[Obstacle]) -> tuple[np.ndarray, np.ndarray]:
    if not obstacles:
        return np.zeros((0, 2)), np.zeros(0)
    centers = np.array([o.position[:2] for o in obstacles], dtype=float)
    radii = np.array([o.collision_radius for o in obstacles], dtype=float)
    return centers, radii


def collision_violation(samples: np.ndarray, obstacles) -> float:
    """Fraction of samples strictly inside any obstacle disk.

    ``obstacles`` is either one obstacle list used for every sample or one
    list per sample.
    """
    samples = np.asarray(samples, dtype=float)
    m = samples.shape[0]
    if m == 0:
        return 0.0
    per_sample = len(obstacles) == m and len(obstacles) > 0 and not isinstance(
        obstacles[0], Obstacle
    )
    if per_sample:
        hits = 0
        for p, snapshot in zip(samples, obstacles):
            centers, radii = _disk_arrays(snapshot)
            d2 = ((centers - p[:2]) ** 2).sum(axis=1)
            hits += bool(np.any(d2 < radii**2))
        return hits / m
    centers, radii = _disk_arrays(obstacles)
    if radii.size == 0:
        return 0.0
    d2 = ((samples[:, None, :2] - centers[None, :, :]) ** 2).sum(axis=2)
    return float(np.any(d2 < radii[None, :] ** 2, axis=1).mean())


def step_obstacle(obstacle: Obstacle, rng: np.random.Generator) -> Obstacle:
    """Advance one obstacle by one time step.

    Draws: quasi-static takes one normal; moving kinds take a heading
    ``U(0, 2pi)`` and a step ``|N(0, motion_sigma)|``; current-affected then
    takes one more normal ``X ~ N(0, radius_sigma)`` and grows by
    ``|V_c| * (|X| + radius_sigma)``.
    """
    kind = obstacle.kind
    if kind is ObstacleKind.STATIC_KNOWN:
        return obstacle
    if kind is ObstacleKind.QUASI_STATIC:
        return replace(obstacle, uncertainty=abs(rng.normal(0.0, obstacle.radius_sigma)))

    heading = rng.uniform(0.0, 2.0 * math.pi)
    step = abs(rng.normal(0.0, obstacle.motion_sigma))
    x, y, z = obstacle.position
    moved = replace(obstacle, position=(x + step * math.cos(heading),
                                        y + step * math.sin(heading), z))
    if kind is ObstacleKind.SELF_MOTIVATED:
        return moved
    noise = rng.normal(0.0, obstacle.radius_sigma)
    growth = obstacle.current_magnitude * (abs(noise) + obstacle.radius_sigma)
    return replace(moved, uncertainty=obstacle.uncertainty + growth)


def _spawn_box(window: PathWindow) -> tuple[np.ndarray, np.ndarray]:
    lo = np.minimum(window.start, window.target)
    hi = np.maximum(window.start, window.target)
    return lo, hi


def max_spawn_radius(window: PathWindow) -> float:
    lo, hi = _spawn_box(window)
    return float((hi[:2] - lo[:2]).min()) / 4.0


def spawn_obstacles(
    window: PathWindow,
    counts: Mapping[ObstacleKind | str, int],
    rng: np.random.Generator,
    radius_sigma: float = DEFAULT_RADIUS_SIGMA,
    motion_sigma: float = DEFAULT_MOTION_SIGMA,
    current_sigma: float = DEFAULT_CURRENT_SIGMA,
) -> list[Obstacle]:
    """Random obstacles inside the box spanned by the window's start and target.

    Kinds are spawned in enum order.  Per obstacle: radius ``|N(0, 100)|``
    clamped to ``[1, max_spawn_radius]``, then a truncated-normal x, y (box
    centre, half-extent spread, support shrunk by the radius), then z, then
    ``|N(0, current_sigma)|`` for current-affected obstacles.
    """
    counts = {ObstacleKind(k): int(v) for k, v in counts.items()}
    total = sum(counts.values())
    if total == 0:
        return []
    cap = max_spawn_radius(window)
    if cap < MIN_OBSTACLE_RADIUS:
        raise ValueError("window too small to hold an obstacle")
    lo, hi = _spawn_box(window)
    center = (lo + hi) / 2.0
    spread = np.maximum((hi - lo) / 2.0, 1e-9)

    out: list[Obstacle] = []
    for kind in ObstacleKind:
        for _ in range(counts.get(kind, 0)):
            r = float(np.clip(abs(rng.normal(0.0, INITIAL_RADIUS_SIGMA)),
                              MIN_OBSTACLE_RADIUS, cap))
            pos = []
            for axis in range(3):
                a = lo[axis] + (r if axis < 2 else 0.0)
                b = hi[axis] - (r if axis < 2 else 0.0)
                if b <= a:
                    pos.append(float(center[axis]))
                    continue
                pos.append(float(truncnorm.rvs(
                    (a - center[axis]) / spread[axis], (b - center[axis]) / spread[axis],
                    loc=center[axis], scale=spread[axis], random_state=rng)))
            current = abs(rng.normal(0.0, current_sigma)) if kind is ObstacleKind.CURRENT_AFFECTED else 0.0
            out.append(Obstacle(kind, tuple(pos), r, radius_sigma, motion_sigma, current))
    return out


def chord_blockers(window: PathWindow, count: int, radius: float) -> list[Obstacle]:
    """Static obstacles centred on the straight start-target chord."""
    out = []
    for i in range(count):
        f = (i + 1) / (count + 1)
        p = window.start + f * (window.target - window.start)
        out.append(Obstacle(ObstacleKind.STATIC_KNOWN, tuple(p), radius))
    return out


class PathProblem:
    """BBO adapter: SIVs are control-point fractions for the interior points."""

    def __init__(
        self,
        window: PathWindow,
        obstacles: Sequence[Obstacle],
        rng: np.random.Generator | None = None,
        order: int = DEFAULT_ORDER,
        sample_count: int = DEFAULT_SAMPLES,
    ):
        self.window = window
        self.obstacles = list(obstacles)
        self.order = order
        self.sample_count = sample_count
        self.dimension = 3 * (window.n_control - 2)
        self.lower_bounds = np.zeros(self.dimension)
        self.upper_bounds = np.ones(self.dimension)
        self.dynamic = any(o.kind is not ObstacleKind.STATIC_KNOWN for o in self.obstacles)
        self._rng = rng if rng is not None else np.random.default_rng(0)
        self._basis = basis_matrix(window.n_control, order, sample_count)
        self._refresh()

    def _refresh(self) -> None:
        self._centers, self._radii = _disk_arrays(self.obstacles)

    def advance(self) -> None:
        self.obstacles = [step_obstacle(o, self._rng) for o in self.obstacles]
        self._refresh()

    def polygon(self, siv: np.ndarray) -> ControlPolygon:
        return polygon_from_fractions(self.window.bounds, siv)

    def geometry(self, siv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        points = self.polygon(siv).points
        return points, self._basis @ points

    def _violation(self, samples: np.ndarray) -> float:
        if self._radii.size == 0:
            return 0.0
        d2 = ((samples[:, None, :2] - self._centers[None, :, :]) ** 2).sum(axis=2)
        return float(np.any(d2 < self._radii[None, :] ** 2, axis=1).mean())

    def evaluate(self, siv: np.ndarray) -> tuple[float, float]:
        _, samples = self.geometry(siv)
        _, flight = path_metrics(samples, self.window.speed)
        return flight, self._violation(samples)

    def path(self, siv: np.ndarray) -> SampledPath:
        points, samples = self.geometry(siv)
        length, flight = path_metrics(samples, self.window.speed)
        return SampledPath(
            control_points=points,
            samples=samples,
            length=length,
            flight_time=flight,
            violation=self._violation(samples),
            cost=flight,
            obstacles=tuple(self.obstacles),
        )


def plan_path(
    window: PathWindow,
    obstacles: Sequence[Obstacle],
    config: BboConfig = DEFAULT_PATH_CONFIG,
    rng: np.random.Generator | None = None,
    order: int = DEFAULT_ORDER,
    sample_count: int = DEFAULT_SAMPLES,
) -> tuple[SampledPath, list[TraceRecord]]:
    """Optimize a collision-free, time-minimal path across one window.

    Moving or uncertain obstacles advance one step per BBO iteration using
    ``rng`` (by default a stream derived from ``config.seed``).  The returned
    path is scored against the obstacle state at the end of the run.
    """
    if rng is None:
        rng = np.random.default_rng([int(config.seed), 1])
    problem = PathProblem(window, obstacles, rng, order, sample_count)
    result = evolve(problem, config)
    return problem.path(result.best.siv), result.trace
