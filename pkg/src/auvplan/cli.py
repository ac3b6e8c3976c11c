"""Command line entry point: ``auvplan {generate,route,path,mission,oracle}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from . import svg
from .bbo import BboConfig, trace_to_csv
from .mission import MissionConfig, MissionStatus, mission_cost_terms, mission_time, run_mission
from .path import DEFAULT_PATH_CONFIG, ObstacleKind, PathWindow, plan_path, spawn_obstacles
from .route import DEFAULT_ROUTE_CONFIG, best_route_by_enumeration, plan_route
from .scenario import ScenarioSpec, generate_scenario, load_scenario, save_scenario

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_BAD_INPUT = 3
EXIT_ROUTE_FAILED = 4
EXIT_PATH_FAILED = 5
EXIT_MISSION_FAILED = 6

KIND_ALIASES = {
    "static": ObstacleKind.STATIC_KNOWN,
    "quasi": ObstacleKind.QUASI_STATIC,
    "moving": ObstacleKind.SELF_MOTIVATED,
    "current": ObstacleKind.CURRENT_AFFECTED,
    **{k.value: k for k in ObstacleKind},
}


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise CliError(EXIT_USAGE, "usage", message)


def _read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError(EXIT_BAD_INPUT, "io", str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_BAD_INPUT, "config", f"{path}: {exc}") from exc


def _load_scenario(path: str):
    try:
        return load_scenario(path)
    except OSError as exc:
        raise CliError(EXIT_BAD_INPUT, "io", str(exc)) from exc
    except jsonschema.ValidationError as exc:
        raise CliError(EXIT_BAD_INPUT, "scenario", f"{path}: {exc.message}") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_BAD_INPUT, "scenario", f"{path}: {exc}") from exc


def _bbo_config(path: str | None, default: BboConfig) -> BboConfig:
    if path is None:
        return default
    try:
        return BboConfig.from_dict({**default.to_dict(), **_read_json(path)})
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_BAD_INPUT, "config", f"{path}: {exc}") from exc


def _mission_config(path: str | None) -> MissionConfig:
    if path is None:
        return MissionConfig()
    try:
        return MissionConfig.from_dict(_read_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_BAD_INPUT, "config", f"{path}: {exc}") from exc


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _point(text: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise CliError(EXIT_USAGE, "usage", f"bad point {text!r}") from exc
    if len(vals) != 3:
        raise CliError(EXIT_USAGE, "usage", f"point {text!r} needs x,y,z")
    return np.array(vals)


# ---------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    overrides = _read_json(args.config) if args.config else {}
    if args.waypoints is not None:
        overrides["waypoint_count"] = args.waypoints
    if args.density is not None:
        overrides["edge_density"] = args.density
    if args.t_available is not None:
        overrides["t_available"] = args.t_available
    overrides["seed"] = args.seed
    try:
        spec = (ScenarioSpec.table1(args.table1, **overrides) if args.table1
                else ScenarioSpec.from_dict(overrides))
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_BAD_INPUT, "config", str(exc)) from exc
    try:
        scenario = generate_scenario(spec)
    except RuntimeError as exc:
        raise CliError(EXIT_BAD_INPUT, "scenario", str(exc)) from exc
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_scenario(scenario, args.out)
    print(json.dumps({"scenario": args.out, "waypoints": scenario.network.node_count,
                      "edges": len(scenario.network.edges)}))
    return EXIT_OK


def cmd_route(args) -> int:
    scenario = _load_scenario(args.scenario)
    config = _bbo_config(args.config, DEFAULT_ROUTE_CONFIG).with_seed(args.seed)
    t_available = args.t_available or scenario.t_available
    route, trace = plan_route(scenario.network, t_available, config)
    out = Path(args.out_dir)
    _write(out / "route.json", _dump({
        "t_available": t_available,
        "seed": args.seed,
        "config": config.to_dict(),
        "route": route.to_dict(),
    }))
    _write(out / "route_trace.csv", trace_to_csv(trace))
    print(json.dumps({"route": "-".join(map(str, route.node_sequence)),
                      "cost": route.cost, "violation": route.violation}))
    if not route.feasible:
        raise CliError(EXIT_ROUTE_FAILED, "route", route.diagnostic or "infeasible route")
    return EXIT_OK


def cmd_path(args) -> int:
    if args.scenario:
        scenario = _load_scenario(args.scenario)
        net = scenario.network
        if not args.edge:
            raise CliError(EXIT_USAGE, "usage", "--scenario needs --edge A-B")
        try:
            a, b = (int(v) for v in args.edge.split("-"))
            start, target = net.waypoint(a).xyz, net.waypoint(b).xyz
        except (ValueError, KeyError) as exc:
            raise CliError(EXIT_BAD_INPUT, "scenario", f"bad edge {args.edge!r}") from exc
        speed = net.speed
        field = scenario.field
    else:
        if not (args.start and args.target):
            raise CliError(EXIT_USAGE, "usage", "give --scenario/--edge or --start/--target")
        start, target = _point(args.start), _point(args.target)
        speed = args.speed
        field = ScenarioSpec().obstacles
    try:
        window = PathWindow(start, target, speed)
    except ValueError as exc:
        raise CliError(EXIT_BAD_INPUT, "config", str(exc)) from exc

    if args.obstacles is not None:
        counts = {KIND_ALIASES[args.kind]: args.obstacles}
    else:
        counts = field.counts
    rng = np.random.default_rng([args.seed, 2])
    try:
        obstacles = spawn_obstacles(window, counts, rng, field.radius_sigma,
                                    field.motion_sigma, field.current_sigma)
    except ValueError as exc:
        raise CliError(EXIT_BAD_INPUT, "config", str(exc)) from exc
    config = _bbo_config(args.config, DEFAULT_PATH_CONFIG).with_seed(args.seed)
    path, trace = plan_path(window, obstacles, config)

    out = Path(args.out_dir)
    _write(out / "path.json", _dump({"seed": args.seed, "config": config.to_dict(),
                                     "chord": window.chord, "path": path.to_dict()}))
    _write(out / "path_trace.csv", trace_to_csv(trace))
    _write(out / "path.svg", svg.render(
        [path], path.obstacles, [("S", start), ("T", target)],
        title=f"flight {path.flight_time:.1f} s, violation {path.violation:g}",
        show_control=True))
    print(json.dumps({"flight_time": path.flight_time, "violation": path.violation,
                      "obstacles": len(path.obstacles)}))
    if path.violation > 0:
        raise CliError(EXIT_PATH_FAILED, "path", f"collision violation {path.violation:g}")
    return EXIT_OK


def _mission_job(job: tuple) -> dict:
    scenario_path, seed, config_dict, out_dir = job
    scenario = load_scenario(scenario_path)
    config = MissionConfig.from_dict(config_dict)
    mlog, state = run_mission(scenario, config, seed=seed)
    out = Path(out_dir)
    _write(out / "mission_log.json", mlog.to_json())
    _write(out / "route_events.csv", mlog.route_csv())
    _write(out / "path_events.csv", mlog.path_csv())
    net = scenario.network
    visited = []
    for ev in mlog.path_events:
        for wid in map(int, ev["Edges"].split("-")):
            if not visited or visited[-1] != wid:
                visited.append(wid)
    _write(out / "mission.svg", svg.render(
        mlog.paths, (), [(w, net.waypoint(w).xyz) for w in visited],
        title=f"{state.status.value}, remaining {state.remaining_time:.1f} s"))
    terms = mission_cost_terms(mlog)
    return {
        "seed": seed,
        "status": state.status.value,
        "remaining_time": state.remaining_time,
        "mission_time": mission_time(mlog),
        "replan_count": state.replan_count,
        "mission_cost": terms.total,
        "diagnostic": state.diagnostic,
        "out_dir": str(out),
    }


def cmd_mission(args) -> int:
    scenario = _load_scenario(args.scenario)
    config = _mission_config(args.config)
    seed = scenario.seed if args.seed is None else args.seed
    out = Path(args.out_dir)
    if args.repeat < 1:
        raise CliError(EXIT_USAGE, "usage", "--repeat must be at least 1")
    seeds = [seed + i for i in range(args.repeat)]
    jobs = [(args.scenario, s, config.to_dict(),
             str(out if args.repeat == 1 else out / f"seed-{s}")) for s in seeds]
    if args.workers > 1 and len(jobs) > 1 and os.environ.get("BBO_DETERMINISTIC") != "1":
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_mission_job, jobs))
    else:
        results = [_mission_job(j) for j in jobs]
    if args.repeat > 1:
        _write(out / "summary.json", _dump(results))
    for r in results:
        print(json.dumps(r, sort_keys=True))
    failed = [r for r in results if r["status"] != MissionStatus.SUCCESS.value]
    if failed:
        raise CliError(EXIT_MISSION_FAILED, "mission",
                       f"{len(failed)} of {len(results)} missions failed")
    return EXIT_OK


def cmd_oracle(args) -> int:
    scenario = _load_scenario(args.scenario)
    t_available = args.t_available or scenario.t_available
    try:
        result = best_route_by_enumeration(scenario.network, t_available, args.max_nodes)
    except ValueError as exc:
        raise CliError(EXIT_BAD_INPUT, "scenario", str(exc)) from exc
    payload = {
        "t_available": t_available,
        "routes_examined": result.routes_examined,
        "feasible_routes": result.feasible_routes,
        "route": None if result.route is None else result.route.to_dict(),
    }
    text = _dump(payload)
    if args.out:
        _write(Path(args.out), text)
    sys.stdout.write(text)
    if result.route is None:
        raise CliError(EXIT_ROUTE_FAILED, "route", "no start-destination path exists")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="auvplan", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a random scenario JSON")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--waypoints", type=int)
    g.add_argument("--density", type=float)
    g.add_argument("--t-available", type=float)
    g.add_argument("--table1", type=int, choices=[20, 50, 80, 100],
                   help="benchmark graph size with its density and time budget")
    g.add_argument("--config", help="JSON object of scenario fields")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("route", help="plan a route only")
    r.add_argument("--scenario", required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--t-available", type=float)
    r.add_argument("--config", help="JSON object of BBO settings")
    r.add_argument("--out-dir", default=".")
    r.set_defaults(func=cmd_route)

    pa = sub.add_parser("path", help="plan one obstacle-avoiding path")
    pa.add_argument("--scenario")
    pa.add_argument("--edge", help="waypoint pair A-B from the scenario")
    pa.add_argument("--start", help="x,y,z")
    pa.add_argument("--target", help="x,y,z")
    pa.add_argument("--speed", type=float, default=3.0)
    pa.add_argument("--obstacles", type=int, help="spawn this many obstacles of --kind")
    pa.add_argument("--kind", choices=sorted(KIND_ALIASES), default="static")
    pa.add_argument("--seed", type=int, default=0)
    pa.add_argument("--config", help="JSON object of BBO settings")
    pa.add_argument("--out-dir", default=".")
    pa.set_defaults(func=cmd_path)

    m = sub.add_parser("mission", help="run full missions")
    m.add_argument("--scenario", required=True)
    m.add_argument("--seed", type=int)
    m.add_argument("--repeat", type=int, default=1)
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--config", help="JSON object of mission settings")
    m.add_argument("--out-dir", default=".")
    m.set_defaults(func=cmd_mission)

    o = sub.add_parser("oracle", help="exhaustive optimum route on a small scenario")
    o.add_argument("--scenario", required=True)
    o.add_argument("--t-available", type=float)
    o.add_argument("--max-nodes", type=int, default=10)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
        return args.func(args)
    except CliError as exc:
        message = str(exc).replace("\n", " ")
        print(f"error code={exc.code} kind={exc.kind} message={json.dumps(message)}",
              file=sys.stderr)
        return exc.code
    except Exception as exc:  # noqa: BLE001 - last-resort report
        message = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        print(f"error code={EXIT_UNEXPECTED} kind=unexpected message={json.dumps(message)}",
              file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
