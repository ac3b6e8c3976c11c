"""Biogeography-based route and path planning for autonomous underwater missions."""

from .bbo import BboConfig, Habitat, RateMode, TraceRecord, evolve, species_probabilities
from .mission import (
    MissionConfig,
    MissionLog,
    MissionState,
    MissionStatus,
    expected_edge_time,
    mission_cost,
    replan_check,
    run_mission,
)
from .path import Obstacle, ObstacleKind, PathWindow, evaluate_bspline, plan_path
from .route import OperationNetwork, Route, build_network, plan_route, shrink_network
from .scenario import Scenario, ScenarioSpec, generate_scenario, load_scenario, save_scenario

__version__ = "0.1.0"

__all__ = [
    "BboConfig", "Habitat", "RateMode", "TraceRecord", "evolve", "species_probabilities",
    "MissionConfig", "MissionLog", "MissionState", "MissionStatus", "expected_edge_time",
    "mission_cost", "replan_check", "run_mission",
    "Obstacle", "ObstacleKind", "PathWindow", "evaluate_bspline", "plan_path",
    "OperationNetwork", "Route", "build_network", "plan_route", "shrink_network",
    "Scenario", "ScenarioSpec", "generate_scenario", "load_scenario", "save_scenario",
]
