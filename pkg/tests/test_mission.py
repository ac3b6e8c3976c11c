import csv
import io
import json

import jsonschema
import pytest

from auvplan.mission import (
    PATH_COLUMNS,
    ROUTE_COLUMNS,
    MissionConfig,
    MissionLog,
    MissionStatus,
    expected_edge_time,
    mission_cost,
    mission_cost_terms,
    replan_check,
    replay,
    run_mission,
)
from auvplan.route import TaskSpec, Waypoint, build_network
from auvplan.scenario import Scenario, ScenarioSpec, generate_scenario, load_schema
from helpers import FAST_MISSION, line_scenario, no_obstacles


def two_node(delta=0.0, t_available=1000.0):
    wps = [Waypoint(1, 0, 0, 10), Waypoint(2, 300, 0, 10)]
    net = build_network(wps, [(1, 2, TaskSpec(4.0, delta))], 1, 2, 3.0)
    spec = ScenarioSpec(waypoint_count=2, t_available=t_available, obstacles=no_obstacles())
    return Scenario(spec, net)


def small_random(seed, n=10, t_available=6000.0):
    spec = ScenarioSpec(waypoint_count=n, edge_density=0.5, area_xy=4000, seed=seed,
                        t_available=t_available,
                        obstacles={"counts": {"static_known": 1, "self_motivated": 1,
                                              "current_affected": 1}})
    return generate_scenario(spec)


def check_log_invariants(mlog, state, network):
    doc = json.loads(mlog.to_json())
    jsonschema.validate(doc, load_schema("missionlog.schema.json"))
    tasks = mlog.metadata["completed_tasks"]
    # time conservation, event by event
    before = mlog.metadata["t_available"]
    for ev, task in zip(mlog.path_events, tasks):
        assert ev["T_Available"] == pytest.approx(
            before - (ev["T_path-flight"] + task["completion_time"]), abs=1e-9)
        before = ev["T_Available"]
    # edge single use
    assert len(set(state.visited_edges)) == len(state.visited_edges)
    assert len(state.visited_edges) == len(mlog.path_events)
    # every path edge lies on its route
    routes = {f"Route-{r['Call NO']}": r["Route Sequence"].split("-") for r in mlog.route_events}
    for ev in mlog.path_events:
        a, b = ev["Edges"].split("-")
        seq = routes[ev["Route ID"]]
        assert any(seq[i] == a and seq[i + 1] == b for i in range(len(seq) - 1))
    # replan causality: route call k > 1 follows a path event that stopped the route
    for call in mlog.route_events[1:]:
        prev_route = f"Route-{call['Call NO'] - 1}"
        last = [ev for ev in mlog.path_events if ev["Route ID"] == prev_route][-1]
        assert last["PP Flag"] == 0
        assert call["Start"] == int(last["Edges"].split("-")[1])
    # visited edges never appear in later route searches
    for call in mlog.route_events:
        k = call["Call NO"]
        earlier = {ev["Edges"] for ev in mlog.path_events
                   if int(ev["Route ID"].split("-")[1]) < k}
        seq = call["Route Sequence"].split("-")
        hops = {f"{a}-{b}" for a, b in zip(seq, seq[1:])} | {f"{b}-{a}" for a, b in zip(seq, seq[1:])}
        assert not hops & earlier
    # terminal status
    if state.status is MissionStatus.SUCCESS:
        assert state.current_waypoint == network.destination_id and state.remaining_time >= 0
    else:
        assert state.status is MissionStatus.FAILURE


# ---------------------------------------------------------------- small ops

def test_expected_edge_time():
    sc = two_node()
    assert expected_edge_time(sc.network, 1) == pytest.approx(100.0)
    assert expected_edge_time(two_node(delta=50).network, 1) == pytest.approx(150.0)
    wps = [Waypoint(1, 5, 5, 5), Waypoint(2, 5, 5, 5)]
    net = build_network(wps, [(1, 2, TaskSpec(1.0, 0.0))], 1, 2, 3.0)
    assert expected_edge_time(net, 1) == 0.0


@pytest.mark.parametrize("flight,expected,flag", [
    (1532.7, 1666.7, False),
    (1702.1, 1673.1, True),
    (1000.0, 1000.0, False),
])
def test_replan_check(flight, expected, flag):
    assert replan_check(flight, expected) is flag


def test_replan_check_rejects_negative():
    with pytest.raises(ValueError):
        replan_check(-1.0, 3.0)


# ---------------------------------------------------------------- missions

def test_two_node_mission_succeeds_in_one_call():
    sc = two_node()
    mlog, state = run_mission(sc, FAST_MISSION)
    assert state.status is MissionStatus.SUCCESS
    assert len(mlog.route_events) == 1 and len(mlog.path_events) == 1
    ev = mlog.path_events[0]
    assert ev["Replan Flag"] == 0 and ev["PP Flag"] == 0
    assert ev["Violation"] == 0.0
    assert state.replan_count == 0 and state.compute_time_total == 0.0
    check_log_invariants(mlog, state, sc.network)


def test_blocked_line_replans_at_every_waypoint():
    sc = line_scenario(n=4, blockers=1, radius=80.0)
    mlog, state = run_mission(sc, FAST_MISSION)
    assert state.status is MissionStatus.SUCCESS
    assert [r["Route Sequence"] for r in mlog.route_events] == ["1-2-3-4", "2-3-4", "3-4"]
    assert [e["Replan Flag"] for e in mlog.path_events] == [1, 1, 0]
    assert state.replan_count == 2
    assert state.visited_edges == [1, 2, 3]
    check_log_invariants(mlog, state, sc.network)


def test_running_out_of_time_is_failure():
    sc = line_scenario(n=3, spacing=900.0, delta=100.0, t_available=300.0)
    mlog, state = run_mission(sc, FAST_MISSION)
    assert state.status is MissionStatus.FAILURE
    assert state.remaining_time < 0
    check_log_invariants(mlog, state, sc.network)


def test_disconnected_scenario_reports_failure():
    wps = [Waypoint(1, 0, 0, 0), Waypoint(2, 500, 0, 0), Waypoint(3, 900, 0, 0)]
    net = build_network(wps, [(1, 2, TaskSpec(5.0, 0.0))], 1, 3, 3.0)
    spec = ScenarioSpec(waypoint_count=3, obstacles=no_obstacles())
    mlog, state = run_mission(Scenario(spec, net), FAST_MISSION)
    assert state.status is MissionStatus.FAILURE
    assert "unreachable" in state.diagnostic
    assert mlog.path_events == []


@pytest.mark.parametrize("seed", range(3))
def test_random_missions_keep_invariants(seed):
    sc = small_random(seed)
    mlog, state = run_mission(sc, FAST_MISSION)
    check_log_invariants(mlog, state, sc.network)


def test_replay_is_byte_identical():
    sc = small_random(11)
    a = replay(sc, FAST_MISSION, seed=5)
    b = replay(sc, FAST_MISSION, seed=5)
    assert a == b
    assert '"T_CPU": null' in a
    assert replay(sc, FAST_MISSION, seed=6) != a


def test_compute_time_charging_is_optional():
    sc = line_scenario(n=3, blockers=1, radius=80.0)
    _, plain = run_mission(sc, FAST_MISSION)
    cfg = MissionConfig.from_dict({**FAST_MISSION.to_dict(), "charge_compute_time": True})
    mlog, charged = run_mission(sc, cfg)
    assert plain.replan_count == charged.replan_count == 1
    cpu = sum(r["T_CPU"] for r in mlog.route_events[1:])
    flight = sum(e["T_path-flight"] for e in mlog.path_events)
    assert charged.remaining_time == pytest.approx(sc.t_available - flight - cpu)


# ---------------------------------------------------------------- log formats

def test_csv_headers_and_rows():
    sc = line_scenario(n=3, blockers=1, radius=80.0)
    mlog, _ = run_mission(sc, FAST_MISSION)
    rows = list(csv.reader(io.StringIO(mlog.route_csv())))
    assert rows[0] == ROUTE_COLUMNS
    assert len(rows) == 1 + len(mlog.route_events)
    rows = list(csv.reader(io.StringIO(mlog.path_csv())))
    assert rows[0] == PATH_COLUMNS
    assert rows[1][0] == "Route-1" and rows[1][2] == "1-2"
    assert mlog.path_csv().endswith("\r\n")


def test_log_round_trip_and_schema():
    sc = small_random(2)
    mlog, _ = run_mission(sc, FAST_MISSION)
    back = MissionLog.from_dict(json.loads(mlog.to_json()))
    assert back.to_json() == mlog.to_json()
    broken = json.loads(mlog.to_json())
    broken["path_events"][0]["Replan Flag"] = 2
    with pytest.raises(jsonschema.ValidationError):
        MissionLog.from_dict(broken)


# ---------------------------------------------------------------- cost

def test_mission_cost_matches_hand_sum_of_the_log():
    sc = small_random(4)
    mlog, state = run_mission(sc, FAST_MISSION)
    # re-sum from the CSV text and metadata only
    path_rows = list(csv.DictReader(io.StringIO(mlog.path_csv())))
    route_rows = list(csv.DictReader(io.StringIO(mlog.route_csv())))
    meta = mlog.metadata
    used = sum(float(r["T_path-flight"]) for r in path_rows)
    used += sum(t["completion_time"] for t in meta["completed_tasks"])
    t = meta["t_available"]
    inv = sum(1.0 / t_["priority"] for t_ in meta["completed_tasks"] if t_["priority"])
    cpu = sum(float(r["T_CPU"]) for r in route_rows if int(r["Call NO"]) > 1)
    expect = abs(used - t) / t + inv / meta["inverse_priority_total"] + cpu
    assert mission_cost(mlog) == pytest.approx(expect, rel=1e-12)
    assert mission_cost_terms(mlog).compute_term == pytest.approx(state.compute_time_total)


def test_mission_cost_edge_cases():
    # budget used exactly by one top-priority task, no replans
    mlog = MissionLog(
        route_events=[{"Call NO": 1, "T_CPU": 3.0}],
        path_events=[{"T_path-flight": 900.0}],
        metadata={"t_available": 1000.0, "inverse_priority_total": 0.5,
                  "completed_tasks": [{"edge_id": 1, "priority": 10.0,
                                       "completion_time": 100.0}]},
    )
    terms = mission_cost_terms(mlog)
    assert terms.time_term == 0.0 and terms.compute_term == 0.0
    assert terms.priority_term == pytest.approx(0.2)
    assert mission_cost(mlog) == pytest.approx(0.2)
