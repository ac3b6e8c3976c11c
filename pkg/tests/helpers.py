"""Small fixtures shared by the mission, CLI and acceptance tests."""

import numpy as np

from auvplan.bbo import BboConfig, RateMode
from auvplan.mission import MissionConfig
from auvplan.path import clamped_knots
from auvplan.route import TaskSpec, Waypoint, build_network
from auvplan.scenario import ObstacleField, Scenario, ScenarioSpec

FAST_ROUTE = BboConfig(30, 30, 6, 0, max_emigration=0.2, max_mutation_rate=0.8,
                       rate_mode=RateMode.CONSTANT)
FAST_PATH = BboConfig(20, 25, 4, 0, max_mutation_rate=0.05)


FAST_MISSION = MissionConfig(route=FAST_ROUTE, path=FAST_PATH)


def no_obstacles(**kw):
    return ObstacleField(counts={}, **kw)


def line_scenario(n=4, spacing=900.0, delta=0.0, t_available=1e5, blockers=0, radius=60.0):
    """Waypoints on a line joined only to their neighbours."""
    wps = [Waypoint(i, spacing * (i - 1), 0.0, 50.0) for i in range(1, n + 1)]
    edges = [(i, i + 1, TaskSpec(5.0, delta)) for i in range(1, n)]
    net = build_network(wps, edges, 1, n, 3.0)
    spec = ScenarioSpec(waypoint_count=n, t_available=t_available, seed=0,
                        task_delta_range=(delta, delta),
                        obstacles=no_obstacles(chord_blockers=blockers, blocker_radius=radius))
    return Scenario(spec, net)


def de_boor(points, order, t):
    """Point on a clamped uniform B-spline by de Boor's triangular scheme."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    p = order - 1
    knots = clamped_knots(n, order)
    # span index s with knots[s] <= t < knots[s+1], last span for t == 1
    if t >= knots[n]:
        s = n - 1
    else:
        s = int(np.searchsorted(knots, t, side="right")) - 1
    d = [points[j + s - p].copy() for j in range(p + 1)]
    for r in range(1, p + 1):
        for j in range(p, r - 1, -1):
            i = j + s - p
            denom = knots[i + 1 + p - r] - knots[i]
            a = 0.0 if denom == 0 else (t - knots[i]) / denom
            d[j] = (1.0 - a) * d[j - 1] + a * d[j]
    return d[p]
