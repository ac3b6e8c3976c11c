"""Task-assignment route planning on a waypoint graph.

A route is encoded as one priority value per waypoint.  Decoding walks the
graph greedily from the start, always stepping to the unvisited neighbour
with the highest priority, until the destination is reached.  BBO then
searches the priority space for the route whose travel time best fills the
available time while carrying high-priority tasks.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Sequence

import numpy as np

from .bbo import BboConfig, RateMode, TraceRecord, evolve

log = logging.getLogger(__name__)

PRIORITY_LOW = -100.0
PRIORITY_HIGH = 100.0
# visited marker, anything below PRIORITY_LOW works
VISITED_PRIORITY = -1e6
STRUCTURAL_PENALTY = 1.0

DEFAULT_ROUTE_CONFIG = BboConfig(
    population_size=150,
    max_iterations=300,
    keep_count=90,
    new_count=0,
    max_emigration=0.2,
    max_mutation_rate=0.8,
    rate_mode=RateMode.CONSTANT,
)


@dataclass(frozen=True)
class Waypoint:
    id: int
    x: float
    y: float
    z: float

    @property
    def xyz(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class TaskSpec:
    priority: float
    completion_time: float

    def __post_init__(self) -> None:
        if not self.priority > 0:
            raise ValueError("task priority must be positive")
        if self.completion_time < 0:
            raise ValueError("task completion time must be non-negative")

    @property
    def inverse_priority(self) -> float:
        return 0.0 if math.isinf(self.priority) else 1.0 / self.priority


NO_TASK = TaskSpec(priority=math.inf, completion_time=0.0)


@dataclass(frozen=True)
class Edge:
    id: int
    a: int
    b: int
    distance: float
    task: TaskSpec

    def other(self, node: int) -> int:
        return self.b if node == self.a else self.a

    def travel_time(self, speed: float) -> float:
        return self.distance / speed + self.task.completion_time


@dataclass(frozen=True)
class OperationNetwork:
    waypoints: tuple[Waypoint, ...]
    edges: tuple[Edge, ...]
    adjacency: dict[int, tuple[tuple[int, int], ...]]
    start_id: int
    destination_id: int
    speed: float

    @property
    def node_ids(self) -> list[int]:
        return [w.id for w in self.waypoints]

    @property
    def node_count(self) -> int:
        return len(self.waypoints)

    @property
    def adjacency_entry_count(self) -> int:
        """Edge count as an adjacency matrix sees it (both directions)."""
        return sum(len(v) for v in self.adjacency.values())

    def waypoint(self, wid: int) -> Waypoint:
        return self._by_id[wid]

    def edge(self, eid: int) -> Edge:
        return self._edges_by_id[eid]

    def edge_between(self, a: int, b: int) -> Edge | None:
        eid = self._pair_index.get((min(a, b), max(a, b)))
        return None if eid is None else self._edges_by_id[eid]

    @property
    def inverse_priority_total(self) -> float:
        return sum(e.task.inverse_priority for e in self.edges)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_by_id", {w.id: w for w in self.waypoints})
        object.__setattr__(self, "_edges_by_id", {e.id: e for e in self.edges})
        object.__setattr__(
            self, "_pair_index", {(min(e.a, e.b), max(e.a, e.b)): e.id for e in self.edges}
        )


@dataclass
class Route:
    node_sequence: list[int]
    edge_sequence: list[int]
    travel_time: float
    total_weight: float
    cost: float = math.inf
    violation: float = math.inf
    feasible: bool = False
    defects: int = 0
    diagnostic: str | None = None

    @property
    def task_count(self) -> int:
        return len(self.edge_sequence)

    def to_dict(self) -> dict:
        return {
            "node_sequence": list(self.node_sequence),
            "edge_sequence": list(self.edge_sequence),
            "travel_time": self.travel_time,
            "total_weight": self.total_weight,
            "cost": self.cost,
            "violation": self.violation,
            "feasible": self.feasible,
            "diagnostic": self.diagnostic,
        }


def euclidean(p: Sequence[float], q: Sequence[float]) -> float:
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(p, q)))


def build_network(
    waypoints: Sequence[Waypoint],
    edges: Iterable[tuple[int, int, TaskSpec]],
    start_id: int,
    destination_id: int,
    speed: float,
) -> OperationNetwork:
    """Assemble an undirected operation network; edge ids follow input order from 1."""
    wps = tuple(waypoints)
    by_id = {w.id: w for w in wps}
    if len(by_id) != len(wps):
        raise ValueError("duplicate waypoint id")
    if start_id not in by_id or destination_id not in by_id:
        raise ValueError("start or destination waypoint does not exist")
    if start_id == destination_id:
        raise ValueError("start and destination must differ")
    if not speed > 0:
        raise ValueError("vehicle speed must be positive")

    built: list[Edge] = []
    seen: set[tuple[int, int]] = set()
    adjacency: dict[int, list[tuple[int, int]]] = {w.id: [] for w in wps}
    for eid, (a, b, task) in enumerate(edges, start=1):
        if a == b:
            raise ValueError(f"self loop on waypoint {a}")
        if a not in by_id or b not in by_id:
            raise ValueError(f"edge {a}-{b} references an unknown waypoint")
        pair = (min(a, b), max(a, b))
        if pair in seen:
            raise ValueError(f"duplicate edge {a}-{b}")
        seen.add(pair)
        d = euclidean(
            (by_id[a].x, by_id[a].y, by_id[a].z), (by_id[b].x, by_id[b].y, by_id[b].z)
        )
        built.append(Edge(eid, a, b, d, task))
        adjacency[a].append((b, eid))
        adjacency[b].append((a, eid))
    return OperationNetwork(
        waypoints=wps,
        edges=tuple(built),
        adjacency={k: tuple(sorted(v)) for k, v in adjacency.items()},
        start_id=start_id,
        destination_id=destination_id,
        speed=float(speed),
    )


def route_from_nodes(network: OperationNetwork, nodes: Sequence[int]) -> Route:
    """Route metrics for an explicit node sequence; missing hops count as defects."""
    edges: list[int] = []
    time = 0.0
    weight = 0.0
    defects = 0
    for a, b in zip(nodes, nodes[1:]):
        e = network.edge_between(a, b)
        if e is None:
            # phantom hop: charge straight-line travel so the time term stays meaningful
            defects += 1
            time += euclidean(network.waypoint(a).xyz, network.waypoint(b).xyz) / network.speed
            continue
        edges.append(e.id)
        time += e.travel_time(network.speed)
        if not math.isinf(e.task.priority):
            weight += e.task.priority
    if not nodes or nodes[0] != network.start_id:
        defects += 1
    if not nodes or nodes[-1] != network.destination_id:
        defects += 1
    if len(set(nodes)) != len(nodes):
        defects += 1
    return Route(list(nodes), edges, time, weight, defects=defects)


def decode_priority_vector(
    network: OperationNetwork, priorities: Sequence[float], t_available: float
) -> Route:
    """Greedy priority walk from start to destination, with destination repair."""
    ids = network.node_ids
    if len(priorities) != len(ids):
        raise ValueError("priority vector length must equal the waypoint count")
    prio = {wid: float(p) for wid, p in zip(ids, priorities)}
    adjacency = network.adjacency
    dest = network.destination_id
    n = len(ids)

    current = network.start_id
    seq = [current]
    prio[current] = VISITED_PRIORITY
    while current != dest and len(seq) < n:
        best_node = None
        best_p = VISITED_PRIORITY
        for nb, _ in adjacency[current]:
            p = prio[nb]
            # adjacency is sorted by id, strict > keeps the lowest id on ties
            if p > best_p:
                best_p = p
                best_node = nb
        if best_node is None:
            break
        seq.append(best_node)
        prio[best_node] = VISITED_PRIORITY
        current = best_node

    if seq[-1] != dest:
        if len(seq) == 1:
            seq.append(dest)
        else:
            seq[-1] = dest

    route = route_from_nodes(network, seq)
    route.cost, route.violation = route_cost(route, t_available, network)
    route.feasible = route.violation == 0.0
    return route


def route_cost(
    route: Route, t_available: float, network: OperationNetwork | None = None
) -> tuple[float, float]:
    """Normalized time-fit plus inverse-priority cost, and constraint violation.

    The priority term is divided by the network-wide sum of inverse
    priorities; without a network it cannot be looked up and is zero.
    """
    if not t_available > 0:
        raise ValueError("available time must be positive")
    time_term = abs(route.travel_time - t_available) / t_available
    prio_term = 0.0
    if network is not None:
        inv = sum(network.edge(eid).task.inverse_priority for eid in route.edge_sequence)
        total = network.inverse_priority_total
        prio_term = inv / total if total > 0 else 0.0
    violation = max(0.0, (route.travel_time - t_available) / t_available)
    violation += STRUCTURAL_PENALTY * route.defects
    return time_term + prio_term, violation


class RouteProblem:
    """Adapter exposing route decoding to the BBO engine."""

    def __init__(self, network: OperationNetwork, t_available: float):
        self.network = network
        self.t_available = float(t_available)
        self.dimension = network.node_count
        self.lower_bounds = np.full(self.dimension, PRIORITY_LOW)
        self.upper_bounds = np.full(self.dimension, PRIORITY_HIGH)

    def decode(self, siv: np.ndarray) -> Route:
        return decode_priority_vector(self.network, siv, self.t_available)

    def evaluate(self, siv: np.ndarray) -> tuple[float, float]:
        r = self.decode(siv)
        return r.cost, r.violation


def connected(network: OperationNetwork, a: int | None = None, b: int | None = None) -> bool:
    a = network.start_id if a is None else a
    b = network.destination_id if b is None else b
    seen = {a}
    queue = deque([a])
    while queue:
        cur = queue.popleft()
        if cur == b:
            return True
        for nb, _ in network.adjacency[cur]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return False


def plan_route(
    network: OperationNetwork,
    t_available: float,
    config: BboConfig = DEFAULT_ROUTE_CONFIG,
) -> tuple[Route, list[TraceRecord]]:
    problem = RouteProblem(network, t_available)
    result = evolve(problem, config)
    route = problem.decode(result.best.siv)
    if not connected(network):
        route.diagnostic = (
            f"destination {network.destination_id} unreachable from start {network.start_id}"
        )
        log.warning(route.diagnostic)
    elif not route.feasible:
        route.diagnostic = "no feasible route found within the available time"
    return route, result.trace


def shrink_network(
    network: OperationNetwork, visited_edges: Iterable[int], new_start: int
) -> OperationNetwork:
    """Copy of the network without the visited edges, starting at ``new_start``."""
    if new_start == network.destination_id:
        raise ValueError("new start equals the destination; the mission is over")
    ids = {w.id for w in network.waypoints}
    if new_start not in ids:
        raise ValueError(f"unknown waypoint {new_start}")
    drop = set(visited_edges)
    known = {e.id for e in network.edges}
    missing = drop - known
    if missing:
        raise ValueError(f"unknown edge ids {sorted(missing)}")
    edges = tuple(e for e in network.edges if e.id not in drop)
    adjacency = {
        k: tuple((nb, eid) for nb, eid in v if eid not in drop)
        for k, v in network.adjacency.items()
    }
    return replace(network, edges=edges, adjacency=adjacency, start_id=new_start)


def iter_simple_paths(network: OperationNetwork) -> Iterator[list[int]]:
    """Every simple start-to-destination path, depth first."""
    dest = network.destination_id
    stack = [(network.start_id, [network.start_id])]
    while stack:
        node, path = stack.pop()
        if node == dest:
            yield path
            continue
        for nb, _ in reversed(network.adjacency[node]):
            if nb not in path:
                stack.append((nb, path + [nb]))


@dataclass
class OracleResult:
    route: Route | None
    routes_examined: int
    feasible_routes: int = 0


def best_route_by_enumeration(
    network: OperationNetwork, t_available: float, max_nodes: int = 10
) -> OracleResult:
    """Exhaustive optimum over simple paths; intended for small graphs only."""
    if network.node_count > max_nodes:
        raise ValueError(f"enumeration limited to {max_nodes} waypoints")
    best: Route | None = None
    count = 0
    feasible = 0
    for nodes in iter_simple_paths(network):
        count += 1
        r = route_from_nodes(network, nodes)
        r.cost, r.violation = route_cost(r, t_available, network)
        r.feasible = r.violation == 0.0
        feasible += r.feasible
        if best is None or (r.violation, r.cost, r.node_sequence) < (
            best.violation,
            best.cost,
            best.node_sequence,
        ):
            best = r
    return OracleResult(route=best, routes_examined=count, feasible_routes=feasible)
