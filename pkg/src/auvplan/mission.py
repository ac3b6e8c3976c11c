"""Mission loop coupling the route planner with per-edge path planning."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .bbo import BboConfig
from .path import (
    DEFAULT_CONTROL_POINTS,
    DEFAULT_ORDER,
    DEFAULT_PATH_CONFIG,
    DEFAULT_SAMPLES,
    Obstacle,
    PathWindow,
    SampledPath,
    chord_blockers,
    plan_path,
    spawn_obstacles,
)
from .route import (
    DEFAULT_ROUTE_CONFIG,
    Edge,
    OperationNetwork,
    connected,
    plan_route,
    shrink_network,
)
from .scenario import ObstacleField, Scenario

log = logging.getLogger(__name__)

LOG_SCHEMA_VERSION = 1

ROUTE_COLUMNS = [
    "Call NO", "Start", "Target", "Task NO", "Weight", "Route Cost", "T_CPU",
    "T_Available", "T_Route", "Validity", "Route Sequence",
]
PATH_COLUMNS = [
    "Route ID", "PP Call NO", "Edges", "Violation", "Path Cost", "T_CPU",
    "T_path-flight", "T_Expected", "T_Available", "Replan Flag", "PP Flag",
]
TIMING_COLUMNS = ("T_CPU",)

# stream tags for per-call child seeds
_ROUTE_STREAM, _PATH_STREAM, _SPAWN_STREAM, _MOTION_STREAM = range(4)

# Lower mutation than the standalone default gives paths much closer to the
# chord, which keeps per-edge overruns inside the route planner's reserve.
MISSION_PATH_CONFIG = replace(DEFAULT_PATH_CONFIG, max_mutation_rate=0.02)


class MissionStatus(str, enum.Enum):
    IN_PROGRESS = "InProgress"
    SUCCESS = "Success"
    FAILURE = "Failure"


@dataclass(frozen=True)
class MissionConfig:
    route: BboConfig = DEFAULT_ROUTE_CONFIG
    path: BboConfig = MISSION_PATH_CONFIG
    control_points: int = DEFAULT_CONTROL_POINTS
    spline_order: int = DEFAULT_ORDER
    samples: int = DEFAULT_SAMPLES
    # fraction of the remaining budget withheld from the route planner to
    # absorb path detours around obstacles
    time_reserve: float = 0.08
    charge_compute_time: bool = False
    invalidate_on_overrun: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.time_reserve < 1.0:
            raise ValueError("time_reserve must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "route": self.route.to_dict(),
            "path": self.path.to_dict(),
            "control_points": self.control_points,
            "spline_order": self.spline_order,
            "samples": self.samples,
            "time_reserve": self.time_reserve,
            "charge_compute_time": self.charge_compute_time,
            "invalidate_on_overrun": self.invalidate_on_overrun,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MissionConfig":
        data = dict(data)
        if "route" in data:
            data["route"] = BboConfig.from_dict(data["route"])
        if "path" in data:
            data["path"] = BboConfig.from_dict(data["path"])
        return cls(**data)


@dataclass
class MissionState:
    remaining_time: float
    current_waypoint: int
    visited_edges: list[int] = field(default_factory=list)
    completed_tasks: list[tuple[int, float, float]] = field(default_factory=list)
    replan_count: int = 0
    compute_time_total: float = 0.0
    status: MissionStatus = MissionStatus.IN_PROGRESS
    diagnostic: str | None = None

    def to_dict(self) -> dict:
        return {
            "remaining_time": self.remaining_time,
            "current_waypoint": self.current_waypoint,
            "visited_edges": list(self.visited_edges),
            "completed_tasks": [
                {"edge_id": e, "priority": None if math.isinf(p) else p, "completion_time": d}
                for e, p, d in self.completed_tasks
            ],
            "replan_count": self.replan_count,
            "compute_time_total": self.compute_time_total,
            "status": self.status.value,
            "diagnostic": self.diagnostic,
        }


@dataclass
class MissionLog:
    route_events: list[dict] = field(default_factory=list)
    path_events: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    # planned geometry per path event, kept for plotting; not serialized
    paths: list[SampledPath] = field(default_factory=list, repr=False, compare=False)

    def to_dict(self, mask_timing: bool = False) -> dict:
        def rows(events):
            if not mask_timing:
                return [dict(e) for e in events]
            return [{k: (None if k in TIMING_COLUMNS else v) for k, v in e.items()}
                    for e in events]

        meta = dict(self.metadata)
        if mask_timing:
            meta["compute_time_total"] = None
        return {
            "schema_version": LOG_SCHEMA_VERSION,
            "metadata": meta,
            "route_events": rows(self.route_events),
            "path_events": rows(self.path_events),
        }

    def to_json(self, mask_timing: bool = False) -> str:
        return json.dumps(self.to_dict(mask_timing), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "MissionLog":
        from .scenario import load_schema

        import jsonschema

        jsonschema.validate(data, load_schema("missionlog.schema.json"))
        return cls(
            route_events=[dict(e) for e in data["route_events"]],
            path_events=[dict(e) for e in data["path_events"]],
            metadata=dict(data["metadata"]),
        )

    def route_csv(self) -> str:
        return _csv(ROUTE_COLUMNS, self.route_events)

    def path_csv(self) -> str:
        return _csv(PATH_COLUMNS, self.path_events)


def _csv(columns: Sequence[str], rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\r\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row[k] for k in columns})
    return buf.getvalue()


def expected_edge_time(network: OperationNetwork, edge: Edge | int) -> float:
    """Straight-line travel time plus the task's completion time."""
    if not isinstance(edge, Edge):
        edge = network.edge(edge)
    return edge.travel_time(network.speed)


def replan_check(t_path_flight: float, t_expected: float) -> bool:
    """True when the planned path took longer than the route planner assumed."""
    if t_path_flight < 0 or t_expected < 0:
        raise ValueError("times must be non-negative")
    return t_path_flight > t_expected


def _child_seed(seed: int, stream: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=(stream, index))


def _int_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint64)[0])


ObstacleFactory = Callable[[PathWindow, ObstacleField, np.random.Generator], list[Obstacle]]


def default_obstacles(
    window: PathWindow, obstacle_field: ObstacleField, rng: np.random.Generator
) -> list[Obstacle]:
    """Chord blockers (if any) followed by randomly spawned obstacles."""
    out = chord_blockers(window, obstacle_field.chord_blockers, obstacle_field.blocker_radius)
    try:
        out += spawn_obstacles(
            window,
            obstacle_field.counts,
            rng,
            radius_sigma=obstacle_field.radius_sigma,
            motion_sigma=obstacle_field.motion_sigma,
            current_sigma=obstacle_field.current_sigma,
        )
    except ValueError:
        # window too narrow for a random obstacle
        pass
    return out


def _sequence(nodes: Sequence[int]) -> str:
    return "-".join(str(n) for n in nodes)


def run_mission(
    scenario: Scenario,
    config: MissionConfig = MissionConfig(),
    obstacle_factory: ObstacleFactory = default_obstacles,
    seed: int | None = None,
) -> tuple[MissionLog, MissionState]:
    """Fly a scenario edge by edge, replanning the route whenever a path overruns.

    Every planner call draws its seed from ``seed`` (default: the scenario
    seed) through a distinct child stream, so a mission is a pure function of
    scenario, config and seed apart from the measured ``T_CPU`` columns.
    """
    seed = scenario.seed if seed is None else int(seed)
    base = scenario.network
    t_total = float(scenario.t_available)
    state = MissionState(remaining_time=t_total, current_waypoint=base.start_id)
    mlog = MissionLog()
    network = base
    path_calls = 0

    def finish(status: MissionStatus, diagnostic: str | None = None) -> None:
        state.status = status
        state.diagnostic = diagnostic
        mlog.metadata = {
            "seed": seed,
            "t_available": t_total,
            "remaining_time": state.remaining_time,
            "status": status.value,
            "diagnostic": diagnostic,
            "replan_count": state.replan_count,
            "compute_time_total": state.compute_time_total,
            "inverse_priority_total": base.inverse_priority_total,
            "completed_tasks": state.to_dict()["completed_tasks"],
            "visited_edges": list(state.visited_edges),
            "config": config.to_dict(),
        }

    route_call = 0
    while True:
        route_call += 1
        if route_call > 1:
            network = shrink_network(base, state.visited_edges, state.current_waypoint)
        if not connected(network):
            finish(
                MissionStatus.FAILURE,
                f"destination {network.destination_id} unreachable from "
                f"waypoint {network.start_id} after removing visited edges",
            )
            return mlog, state

        budget = state.remaining_time * (1.0 - config.time_reserve)
        route_cfg = config.route.with_seed(_int_seed(_child_seed(seed, _ROUTE_STREAM, route_call)))
        t0 = time.perf_counter()
        route, _ = plan_route(network, budget, route_cfg)
        t_cpu = time.perf_counter() - t0
        if route_call > 1:
            state.compute_time_total += t_cpu
            if config.charge_compute_time:
                state.remaining_time -= t_cpu
        mlog.route_events.append({
            "Call NO": route_call,
            "Start": network.start_id,
            "Target": network.destination_id,
            "Task NO": route.task_count,
            "Weight": route.total_weight,
            "Route Cost": route.cost,
            "T_CPU": t_cpu,
            "T_Available": state.remaining_time,
            "T_Route": route.travel_time,
            "Validity": "Yes" if route.travel_time <= state.remaining_time else "No",
            "Route Sequence": _sequence(route.node_sequence),
        })
        if route.defects > 0:
            finish(MissionStatus.FAILURE, route.diagnostic or "route planner returned no valid route")
            return mlog, state

        replan = False
        for k, eid in enumerate(route.edge_sequence):
            a, b = route.node_sequence[k], route.node_sequence[k + 1]
            edge = network.edge(eid)
            path_calls += 1
            window = PathWindow(
                base.waypoint(a).xyz, base.waypoint(b).xyz, base.speed, config.control_points
            )
            spawn_rng = np.random.default_rng(_child_seed(seed, _SPAWN_STREAM, path_calls))
            obstacles = obstacle_factory(window, scenario.field, spawn_rng)
            path_cfg = config.path.with_seed(_int_seed(_child_seed(seed, _PATH_STREAM, path_calls)))
            motion_rng = np.random.default_rng(_child_seed(seed, _MOTION_STREAM, path_calls))
            t0 = time.perf_counter()
            path, _ = plan_path(window, obstacles, path_cfg, motion_rng,
                                config.spline_order, config.samples)
            t_cpu = time.perf_counter() - t0

            delta = edge.task.completion_time
            state.remaining_time -= path.flight_time + delta
            state.visited_edges.append(eid)
            state.completed_tasks.append((eid, edge.task.priority, delta))
            state.current_waypoint = b
            t_expected = expected_edge_time(base, edge)

            at_destination = b == base.destination_id
            # the task time inside the estimate doubles as a detour allowance;
            # budget overruns it hides are caught by the invalidation check
            overrun = replan_check(path.flight_time, t_expected)
            flag = overrun and not at_destination and state.remaining_time >= 0
            invalid = False
            if not (flag or at_destination) and config.invalidate_on_overrun:
                rest = sum(network.edge(e).travel_time(base.speed)
                           for e in route.edge_sequence[k + 1:])
                invalid = rest > state.remaining_time
            mlog.path_events.append({
                "Route ID": f"Route-{route_call}",
                "PP Call NO": k + 1,
                "Edges": f"{a}-{b}",
                "Violation": path.violation,
                "Path Cost": path.cost,
                "T_CPU": t_cpu,
                "T_path-flight": path.flight_time,
                "T_Expected": t_expected,
                "T_Available": state.remaining_time,
                "Replan Flag": int(flag),
                "PP Flag": int(not (flag or invalid or at_destination)),
            })
            mlog.paths.append(path)

            if state.remaining_time < 0:
                finish(MissionStatus.FAILURE, "available time exhausted before the destination")
                return mlog, state
            if at_destination:
                finish(MissionStatus.SUCCESS)
                return mlog, state
            if flag or invalid:
                replan = True
                break
        if not replan:
            # route ended away from the destination; cannot happen for a
            # defect-free route but guards the loop
            finish(MissionStatus.FAILURE, "route did not reach the destination")
            return mlog, state
        state.replan_count += 1
        log.debug("replanning from waypoint %d with %.1f s left",
                  state.current_waypoint, state.remaining_time)


@dataclass(frozen=True)
class MissionCostTerms:
    time_term: float
    priority_term: float
    compute_term: float

    @property
    def total(self) -> float:
        return self.time_term + self.priority_term + self.compute_term


def mission_cost_terms(mlog: MissionLog, t_available: float | None = None) -> MissionCostTerms:
    meta = mlog.metadata
    t_available = float(meta["t_available"] if t_available is None else t_available)
    tasks = meta["completed_tasks"]
    if len(tasks) != len(mlog.path_events):
        raise ValueError("log has mismatched path events and completed tasks")
    used = sum(ev["T_path-flight"] + t["completion_time"]
               for ev, t in zip(mlog.path_events, tasks))
    time_term = abs(used - t_available) / t_available
    total_inv = meta["inverse_priority_total"]
    inv = sum(0.0 if t["priority"] is None else 1.0 / t["priority"] for t in tasks)
    priority_term = inv / total_inv if total_inv > 0 else 0.0
    compute_term = sum(ev["T_CPU"] for ev in mlog.route_events if ev["Call NO"] > 1)
    return MissionCostTerms(time_term, priority_term, compute_term)


def mission_cost(mlog: MissionLog, t_available: float | None = None) -> float:
    """Normalized time use, normalized completed inverse priority and replan compute time."""
    return mission_cost_terms(mlog, t_available).total


def mission_time(mlog: MissionLog) -> float:
    """Time consumed by flight and tasks over the whole mission."""
    return mlog.metadata["t_available"] - mlog.metadata["remaining_time"]


def replay(scenario: Scenario, config: MissionConfig, seed: int | None = None,
           obstacle_factory: ObstacleFactory = default_obstacles) -> str:
    """Timing-masked JSON log; equal inputs give byte-identical output."""
    mlog, _ = run_mission(scenario, config, obstacle_factory, seed)
    return mlog.to_json(mask_timing=True)


__all__ = [
    "LOG_SCHEMA_VERSION",
    "MissionConfig",
    "MissionCostTerms",
    "MissionLog",
    "MissionState",
    "MissionStatus",
    "PATH_COLUMNS",
    "ROUTE_COLUMNS",
    "default_obstacles",
    "expected_edge_time",
    "mission_cost",
    "mission_cost_terms",
    "mission_time",
    "replan_check",
    "replay",
    "run_mission",
]
