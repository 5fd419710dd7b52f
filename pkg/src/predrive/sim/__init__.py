"""Deterministic road world with IDM/MOBIL human drivers."""
from predrive.sim.driver import find_follower, find_leader, gap_between, idm_accel, mobil_decide
from predrive.sim.params import BEHAVIOR_PRESETS, BehaviorSet, DriverParams, params_for
from predrive.sim.road import RampGeometry, Road, RoadSpec, default_spec
from predrive.sim.vehicle import VehicleState, rectangles_overlap
from predrive.sim.world import DT_SIM, LC_DURATION, World, spawn_scenario, step_world

__all__ = [
    "BEHAVIOR_PRESETS", "BehaviorSet", "DriverParams", "params_for",
    "RampGeometry", "Road", "RoadSpec", "default_spec",
    "VehicleState", "rectangles_overlap",
    "DT_SIM", "LC_DURATION", "World", "spawn_scenario", "step_world",
    "find_follower", "find_leader", "gap_between", "idm_accel", "mobil_decide",
]
