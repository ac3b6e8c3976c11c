import csv
import json
import xml.etree.ElementTree as ET

import pytest

from auvplan import cli
from auvplan.mission import PATH_COLUMNS, ROUTE_COLUMNS
from helpers import FAST_MISSION, FAST_PATH, FAST_ROUTE

SVG_NS = "{http://www.w3.org/2000/svg}"


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def parse_error(err):
    line = err.strip().splitlines()[-1]
    assert line.startswith("error code=")
    fields = dict(tok.split("=", 1) for tok in line.split(" ", 3)[1:3])
    return int(fields["code"]), fields["kind"]


@pytest.fixture
def small_scenario(tmp_path, capsys):
    path = tmp_path / "s.json"
    cfg = tmp_path / "spec.json"
    cfg.write_text(json.dumps({"area_xy": 3000, "edge_density": 0.6, "t_available": 4000,
                               "obstacles": {"counts": {"static_known": 1,
                                                        "self_motivated": 1}}}))
    code, _, _ = run(["generate", "--out", path, "--seed", 3, "--waypoints", 8,
                      "--config", cfg], capsys)
    assert code == 0
    return path


@pytest.fixture
def mission_config(tmp_path):
    path = tmp_path / "mission.json"
    path.write_text(json.dumps(FAST_MISSION.to_dict()))
    return path


def test_generate_writes_valid_scenario(small_scenario):
    doc = json.loads(small_scenario.read_text())
    assert doc["schema_version"] == 1 and len(doc["waypoints"]) == 8


def test_generate_table1_preset(tmp_path, capsys):
    code, out, _ = run(["generate", "--out", tmp_path / "t.json", "--table1", 20], capsys)
    assert code == 0 and json.loads(out)["waypoints"] == 20


def test_mission_twice_gives_identical_logs(tmp_path, small_scenario, mission_config, capsys):
    logs = []
    for name in ("a", "b"):
        code, _, err = run(["mission", "--scenario", small_scenario, "--seed", 7,
                            "--config", mission_config, "--out-dir", tmp_path / name], capsys)
        assert code in (0, 6), err
        doc = json.loads((tmp_path / name / "mission_log.json").read_text())
        for ev in doc["route_events"] + doc["path_events"]:
            ev["T_CPU"] = None
        doc["metadata"]["compute_time_total"] = None
        logs.append(json.dumps(doc, sort_keys=True))
        with open(tmp_path / name / "route_events.csv", newline="") as fh:
            assert next(csv.reader(fh)) == ROUTE_COLUMNS
        with open(tmp_path / name / "path_events.csv", newline="") as fh:
            assert next(csv.reader(fh)) == PATH_COLUMNS
        ET.parse(tmp_path / name / "mission.svg")
    assert logs[0] == logs[1]


def test_mission_repeat_writes_summary(tmp_path, small_scenario, mission_config, capsys):
    code, out, _ = run(["mission", "--scenario", small_scenario, "--seed", 1, "--repeat", 2,
                        "--config", mission_config, "--out-dir", tmp_path / "rep"], capsys)
    summary = json.loads((tmp_path / "rep" / "summary.json").read_text())
    assert [r["seed"] for r in summary] == [1, 2]
    assert (tmp_path / "rep" / "seed-2" / "mission_log.json").exists()
    assert code == (0 if all(r["status"] == "Success" for r in summary) else 6)


def test_oracle_is_a_pure_function(tmp_path, small_scenario, capsys):
    code, first, _ = run(["oracle", "--scenario", small_scenario], capsys)
    assert code == 0
    code, second, _ = run(["oracle", "--scenario", small_scenario], capsys)
    assert first == second
    assert json.loads(first)["route"]["node_sequence"][0] == 1


def test_oracle_refuses_large_graphs(tmp_path, capsys):
    run(["generate", "--out", tmp_path / "big.json", "--waypoints", 12], capsys)
    code, _, err = run(["oracle", "--scenario", tmp_path / "big.json"], capsys)
    assert code == cli.EXIT_BAD_INPUT
    assert parse_error(err) == (3, "scenario")


def test_path_svg_has_one_disk_per_obstacle(tmp_path, capsys):
    code, out, err = run(["path", "--start", "0,0,10", "--target", "3000,2000,60",
                          "--obstacles", 5, "--kind", "current", "--seed", 2,
                          "--out-dir", tmp_path], capsys)
    assert code in (0, 5), err
    root = ET.parse(tmp_path / "path.svg").getroot()
    circles = [c for c in root.iter(f"{SVG_NS}circle") if c.get("class") == "obstacle"]
    assert len(circles) == 5
    assert {c.get("data-kind") for c in circles} == {"current_affected"}
    assert (tmp_path / "path_trace.csv").read_text().startswith("iteration,")


def test_path_from_scenario_edge(tmp_path, small_scenario, capsys):
    doc = json.loads(small_scenario.read_text())
    e = doc["edges"][0]
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps(FAST_PATH.to_dict()))
    code, out, err = run(["path", "--scenario", small_scenario, "--edge",
                          f"{e['from']}-{e['to']}", "--config", cfg, "--out-dir", tmp_path],
                         capsys)
    assert code in (0, 5), err
    assert json.loads(out)["obstacles"] == 2


def test_route_outputs(tmp_path, small_scenario, capsys):
    cfg = tmp_path / "r.json"
    cfg.write_text(json.dumps(FAST_ROUTE.to_dict()))
    code, out, err = run(["route", "--scenario", small_scenario, "--config", cfg,
                          "--out-dir", tmp_path], capsys)
    assert code == 0, err
    doc = json.loads((tmp_path / "route.json").read_text())
    assert doc["route"]["violation"] == 0.0
    assert (tmp_path / "route_trace.csv").exists()


def test_route_failure_exit_code(tmp_path, small_scenario, capsys):
    code, _, err = run(["route", "--scenario", small_scenario, "--t-available", 1,
                        "--out-dir", tmp_path], capsys)
    assert code == cli.EXIT_ROUTE_FAILED
    assert parse_error(err) == (4, "route")


def test_path_failure_exit_code(tmp_path, capsys, monkeypatch):
    real = cli.plan_path

    def colliding(*args, **kwargs):
        path, trace = real(*args, **kwargs)
        path.violation = 0.5
        return path, trace

    monkeypatch.setattr(cli, "plan_path", colliding)
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps(FAST_PATH.to_dict()))
    code, _, err = run(["path", "--start", "0,0,0", "--target", "500,0,0", "--obstacles", 0,
                        "--config", cfg, "--out-dir", tmp_path], capsys)
    assert code == cli.EXIT_PATH_FAILED
    assert parse_error(err) == (5, "path")


def test_mission_failure_exit_code(tmp_path, capsys, mission_config):
    cfg = tmp_path / "spec.json"
    cfg.write_text(json.dumps({"t_available": 50, "area_xy": 3000,
                               "obstacles": {"counts": {}}}))
    run(["generate", "--out", tmp_path / "s.json", "--waypoints", 6, "--config", cfg], capsys)
    code, _, err = run(["mission", "--scenario", tmp_path / "s.json", "--config", mission_config,
                        "--out-dir", tmp_path / "m"], capsys)
    assert code == cli.EXIT_MISSION_FAILED
    assert parse_error(err) == (6, "mission")


@pytest.mark.parametrize("argv", [[], ["fly"], ["route"], ["path", "--bogus"]])
def test_usage_errors(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == cli.EXIT_USAGE
    assert parse_error(err) == (2, "usage")


def test_malformed_inputs(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = run(["route", "--scenario", bad], capsys)
    assert (code, parse_error(err)[1]) == (3, "scenario")
    bad.write_text(json.dumps({"schema_version": 1}))
    code, _, err = run(["oracle", "--scenario", bad], capsys)
    assert (code, parse_error(err)[1]) == (3, "scenario")
    code, _, err = run(["route", "--scenario", tmp_path / "missing.json"], capsys)
    assert (code, parse_error(err)[1]) == (3, "io")
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"population_size": -4}))
    run(["generate", "--out", tmp_path / "s.json", "--waypoints", 5], capsys)
    code, _, err = run(["route", "--scenario", tmp_path / "s.json", "--config", cfg], capsys)
    assert (code, parse_error(err)[1]) == (3, "config")
