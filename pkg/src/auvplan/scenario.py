"""Seeded scenario generation and the scenario JSON format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from importlib import resources
from typing import Any, Mapping

import jsonschema
import numpy as np

from .path import ObstacleKind
from .route import NO_TASK, OperationNetwork, TaskSpec, Waypoint, build_network, connected

SCHEMA_VERSION = 1
MAX_CONNECT_RETRIES = 100


@lru_cache(maxsize=None)
def load_defaults() -> dict:
    text = resources.files("auvplan").joinpath("data/defaults.json").read_text()
    return json.loads(text)


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    return json.loads(resources.files("auvplan").joinpath(f"schemas/{name}").read_text())


def _default(key: str) -> Any:
    value = load_defaults()["scenario"][key]
    return tuple(value) if isinstance(value, list) else value


def _default_counts() -> dict[str, int]:
    return dict(load_defaults()["scenario"]["obstacle_counts"])


@dataclass(frozen=True)
class ObstacleField:
    """Parameters for the obstacles spawned in each path window."""

    counts: Mapping[str, int] = field(default_factory=_default_counts)
    radius_sigma: float = field(default_factory=lambda: _default("radius_sigma"))
    motion_sigma: float = field(default_factory=lambda: _default("motion_sigma"))
    current_sigma: float = field(default_factory=lambda: _default("current_sigma"))
    chord_blockers: int = field(default_factory=lambda: _default("chord_blockers"))
    blocker_radius: float = field(default_factory=lambda: _default("blocker_radius"))

    def __post_init__(self) -> None:
        counts = {ObstacleKind(k).value: int(v) for k, v in dict(self.counts).items()}
        if any(v < 0 for v in counts.values()):
            raise ValueError("obstacle counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    def to_dict(self) -> dict:
        return {f.name: (dict(getattr(self, f.name)) if f.name == "counts" else getattr(self, f.name))
                for f in fields(self)}


@dataclass(frozen=True)
class ScenarioSpec:
    waypoint_count: int = field(default_factory=lambda: _default("waypoint_count"))
    edge_density: float = field(default_factory=lambda: _default("edge_density"))
    area_xy: float = field(default_factory=lambda: _default("area_xy"))
    depth_z: float = field(default_factory=lambda: _default("depth_z"))
    speed: float = field(default_factory=lambda: _default("speed"))
    t_available: float = field(default_factory=lambda: _default("t_available"))
    task_priority_range: tuple[float, float] = field(
        default_factory=lambda: _default("task_priority_range"))
    task_delta_range: tuple[float, float] = field(
        default_factory=lambda: _default("task_delta_range"))
    taskless_fraction: float = field(default_factory=lambda: _default("taskless_fraction"))
    obstacles: ObstacleField = field(default_factory=ObstacleField)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "task_priority_range", tuple(map(float, self.task_priority_range)))
        object.__setattr__(self, "task_delta_range", tuple(map(float, self.task_delta_range)))
        if isinstance(self.obstacles, Mapping):
            object.__setattr__(self, "obstacles", ObstacleField(**self.obstacles))
        if self.waypoint_count < 2:
            raise ValueError("need at least 2 waypoints")
        if not 0.0 < self.edge_density <= 1.0:
            raise ValueError("edge_density must lie in (0, 1]")
        if not (self.area_xy > 0 and self.depth_z >= 0 and self.speed > 0 and self.t_available > 0):
            raise ValueError("area, speed and available time must be positive")
        lo, hi = self.task_priority_range
        if not (0.0 <= lo < hi):
            raise ValueError("priority range must be non-empty with a non-negative lower end")
        lo, hi = self.task_delta_range
        if not (0.0 <= lo <= hi):
            raise ValueError("task completion-time range must be non-empty and non-negative")
        if not 0.0 <= self.taskless_fraction <= 1.0:
            raise ValueError("taskless_fraction must lie in [0, 1]")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["task_priority_range"] = list(self.task_priority_range)
        d["task_delta_range"] = list(self.task_delta_range)
        d["obstacles"] = self.obstacles.to_dict()
        return d

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScenarioSpec":
        return cls(**data)

    @classmethod
    def table1(cls, nodes: int, **overrides) -> "ScenarioSpec":
        """Graph size/budget pairing of the route-planner benchmark table."""
        row = load_defaults()["table1_sizes"][str(nodes)]
        return cls(waypoint_count=nodes, **{**row, **overrides})


@dataclass(frozen=True)
class Scenario:
    spec: ScenarioSpec
    network: OperationNetwork

    @property
    def field(self) -> ObstacleField:
        return self.spec.obstacles

    @property
    def t_available(self) -> float:
        return self.spec.t_available

    @property
    def seed(self) -> int:
        return int(self.spec.seed)

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, spec=replace(self.spec, seed=int(seed)))

    def __iter__(self):
        return iter((self.network, self.field))


def generate_scenario(spec: ScenarioSpec) -> Scenario:
    """Random waypoint network with one task per edge.

    Draw order per attempt: waypoint coordinates ``(n, 3)``; one uniform per
    node pair ``(i < j)`` for edge existence; then per kept edge, in order, a
    uniform for the taskless test, one for the priority and one for the
    completion time.  Attempts repeat on the same stream until the start
    (first waypoint) reaches the destination (last waypoint).
    """
    rng = np.random.default_rng(int(spec.seed))
    n = spec.waypoint_count
    p_lo, p_hi = spec.task_priority_range
    d_lo, d_hi = spec.task_delta_range
    for _ in range(MAX_CONNECT_RETRIES):
        coords = rng.random((n, 3)) * np.array([spec.area_xy, spec.area_xy, spec.depth_z])
        waypoints = [Waypoint(i + 1, *map(float, c)) for i, c in enumerate(coords)]
        pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
        keep = rng.random(len(pairs)) < spec.edge_density
        edges = []
        for (a, b) in (pr for pr, k in zip(pairs, keep) if k):
            taskless = rng.random() < spec.taskless_fraction
            # (lo, hi] so a zero lower end never yields a zero priority
            rho = p_hi - rng.random() * (p_hi - p_lo)
            delta = d_lo + rng.random() * (d_hi - d_lo)
            edges.append((a, b, NO_TASK if taskless else TaskSpec(float(rho), float(delta))))
        network = build_network(waypoints, edges, 1, n, spec.speed)
        if connected(network):
            return Scenario(spec, network)
    raise RuntimeError(
        f"no connected start-destination network after {MAX_CONNECT_RETRIES} attempts")


def scenario_to_dict(scenario: Scenario) -> dict:
    net = scenario.network
    return {
        "schema_version": SCHEMA_VERSION,
        "spec": scenario.spec.to_dict(),
        "start_id": net.start_id,
        "destination_id": net.destination_id,
        "speed": net.speed,
        "waypoints": [{"id": w.id, "x": w.x, "y": w.y, "z": w.z} for w in net.waypoints],
        "edges": [
            {
                "id": e.id,
                "from": e.a,
                "to": e.b,
                "priority": None if math.isinf(e.task.priority) else e.task.priority,
                "completion_time": e.task.completion_time,
            }
            for e in net.edges
        ],
    }


def scenario_from_dict(data: Mapping) -> Scenario:
    jsonschema.validate(data, load_schema("scenario.schema.json"))
    if data["schema_version"] != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {data['schema_version']}")
    spec = ScenarioSpec.from_dict(data["spec"])
    edges_sorted = sorted(data["edges"], key=lambda e: e["id"])
    if [e["id"] for e in edges_sorted] != list(range(1, len(edges_sorted) + 1)):
        raise ValueError("edge ids must be contiguous from 1")
    waypoints = [Waypoint(w["id"], w["x"], w["y"], w["z"]) for w in data["waypoints"]]
    edges = [
        (e["from"], e["to"],
         NO_TASK if e["priority"] is None else TaskSpec(e["priority"], e["completion_time"]))
        for e in edges_sorted
    ]
    network = build_network(waypoints, edges, data["start_id"], data["destination_id"],
                            data["speed"])
    return Scenario(spec, network)


def dumps_scenario(scenario: Scenario) -> str:
    return json.dumps(scenario_to_dict(scenario), indent=2, sort_keys=True) + "\n"


def loads_scenario(text: str) -> Scenario:
    return scenario_from_dict(json.loads(text))


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_scenario(scenario))


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return loads_scenario(fh.read())
