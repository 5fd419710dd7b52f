"""Deterministic road world: vehicle integration, HV control, spawning.

The world advances with fixed-step kinematics (x' = v cos psi, y' = v sin psi)
at ``dt_sim`` resolution; :func:`step_world` subdivides longer steps. HVs are
driven by IDM longitudinally and MOBIL laterally; AVs execute meta-actions.
Lane changes run as a constant-lateral-rate maneuver over ``LC_DURATION``
seconds. All randomness flows from the per-world seed, and vehicles are always
iterated in id order, so identical (spec, seed, action trace) yields identical
trajectories.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from predrive.actions import ACTION_ACCEL, MetaAction
from predrive.errors import ConfigurationError
from predrive.sim.driver import find_leader, idm_accel, mobil_decide
from predrive.sim.params import BehaviorSet, DriverParams, params_for
from predrive.sim.road import Road, RoadSpec
from predrive.sim.vehicle import VehicleState, rectangles_overlap

DT_SIM = 0.1
LC_DURATION = 1.0
LC_COOLDOWN = 2.0
AV_V_CAP = 40.0
_SPAWN_ATTEMPTS = 200


@dataclass
class LaneManeuver:
    target_lane: int
    y_target: float
    rate: float  # signed lateral rate, m/s


@dataclass
class World:
    road: Road
    vehicles: list[VehicleState]
    hv_params: dict[int, DriverParams]
    seed: int
    dt_sim: float = DT_SIM
    t: float = 0.0
    maneuvers: dict[int, LaneManeuver] = field(default_factory=dict)
    lc_cooldown_until: dict[int, float] = field(default_factory=dict)
    collisions: list[tuple[int, int]] = field(default_factory=list)
    ran_off_road: set[int] = field(default_factory=set)

    def vehicle(self, vid: int) -> VehicleState:
        for veh in self.vehicles:
            if veh.id == vid:
                return veh
        raise KeyError(f"no vehicle with id {vid}")

    def av_ids(self) -> list[int]:
        return [v.id for v in self.vehicles if v.kind == "AV"]

    def any_av_crashed(self) -> bool:
        return any(v.crashed for v in self.vehicles if v.kind == "AV")

    def copy(self) -> "World":
        return copy.deepcopy(self)

    def virtual_ramp_leader(self, veh: VehicleState) -> VehicleState | None:
        """Stationary obstacle at the end of a terminating lane."""
        end_x = self.road.lane_end_x(veh.lane)
        if end_x is None or veh.x > end_x:
            return None
        return VehicleState(id=-1, x=end_x + veh.length / 2.0,
                            y=self.road.lane_y(veh.lane), v=0.0, lane=veh.lane)


def _begin_lane_change(world: World, veh: VehicleState, target: int) -> None:
    y_target = world.road.lane_y(target)
    rate = (y_target - veh.y) / LC_DURATION
    world.maneuvers[veh.id] = LaneManeuver(target, y_target, rate)


def _apply_hv_lateral(world: World, veh: VehicleState) -> None:
    if veh.id in world.maneuvers or veh.crashed:
        return
    if world.t < world.lc_cooldown_until.get(veh.id, 0.0):
        return
    params = world.hv_params[veh.id]
    decision = mobil_decide(veh, world.vehicles, params, world.road,
                            virtual_leader=world.virtual_ramp_leader(veh))
    if decision == "left":
        _begin_lane_change(world, veh, veh.lane - 1)
    elif decision == "right":
        _begin_lane_change(world, veh, veh.lane + 1)


def _substep(world: World, accels: dict[int, float], dt: float) -> None:
    road = world.road
    for veh in world.vehicles:
        if veh.crashed:
            continue
        v_cap = AV_V_CAP if veh.kind == "AV" else world.hv_params[veh.id].v0 * 1.5
        veh.v = min(max(veh.v + accels.get(veh.id, 0.0) * dt, 0.0), v_cap)

        maneuver = world.maneuvers.get(veh.id)
        if maneuver is not None:
            rate = maneuver.rate
            if veh.v > abs(rate):
                veh.psi = math.asin(rate / veh.v)
            elif veh.v > 0:
                veh.psi = math.copysign(math.pi / 2.0, rate)
            else:
                veh.psi = 0.0
            dy = veh.v * math.sin(veh.psi) * dt
            remaining = maneuver.y_target - veh.y
            if abs(dy) >= abs(remaining):
                veh.y = maneuver.y_target
                veh.psi = 0.0
                del world.maneuvers[veh.id]
                world.lc_cooldown_until[veh.id] = world.t + LC_COOLDOWN
            else:
                veh.y += dy
        veh.x += veh.v * math.cos(veh.psi) * dt
        veh.lane = road.nearest_lane(veh.y)

    world.t += dt

    # collision + run-off checks
    live = [v for v in world.vehicles if not v.crashed]
    for i, a in enumerate(live):
        for b in live[i + 1:]:
            if rectangles_overlap(a, b):
                world.collisions.append((a.id, b.id))
                a.crashed = b.crashed = True
    for veh in world.vehicles:
        if veh.crashed:
            veh.v = 0.0
            continue
        end_x = world.road.lane_end_x(veh.lane)
        if end_x is not None and veh.front > end_x:
            veh.crashed = True
            veh.v = 0.0
            world.ran_off_road.add(veh.id)


def step_world(world: World, actions: dict[int, MetaAction],
               dt: float) -> World:
    """Advance the world by ``dt`` seconds under the given AV meta-actions.

    HVs follow IDM/MOBIL; each AV must have exactly one action, held for the
    whole step. The world is updated in place and returned.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    av_ids = set(world.av_ids())
    if set(actions) != av_ids:
        raise ValueError(f"actions must cover exactly the AV ids {sorted(av_ids)}")

    # Lateral decisions are made once per call: HVs via MOBIL, AVs via action.
    for veh in world.vehicles:
        if veh.crashed:
            continue
        if veh.kind == "HV":
            _apply_hv_lateral(world, veh)
        else:
            action = actions[veh.id]
            if veh.id not in world.maneuvers:
                target = veh.lane + {MetaAction.LANE_LEFT: -1,
                                     MetaAction.LANE_RIGHT: 1}.get(action, 0)
                if target != veh.lane and world.road.can_change(
                        veh.lane, target, veh.x):
                    _begin_lane_change(world, veh, target)

    n_sub = max(1, int(math.ceil(dt / world.dt_sim - 1e-9)))
    dt_sub = dt / n_sub
    for _ in range(n_sub):
        accels: dict[int, float] = {}
        for veh in world.vehicles:
            if veh.crashed:
                continue
            if veh.kind == "HV":
                leader = find_leader(veh, world.vehicles)
                virtual = world.virtual_ramp_leader(veh)
                if leader is None or (virtual is not None
                                      and virtual.x < leader.x):
                    leader = virtual if virtual is not None else leader
                accels[veh.id] = idm_accel(veh, leader,
                                           world.hv_params[veh.id])
            else:
                accels[veh.id] = ACTION_ACCEL[actions[veh.id]]
        _substep(world, accels, dt_sub)
    return world


def spawn_scenario(spec: RoadSpec, behaviors: BehaviorSet, n_av: int,
                   n_hv: int, seed: int) -> World:
    """Deterministic, overlap-free initial world for a scenario.

    HV parameters come from the behavior presets. In the merging scenario the
    AVs start on the ramp upstream of the taper with HV traffic on the
    mainline; other scenarios distribute everyone across the through lanes.
    """
    road = Road(spec)
    rng = np.random.default_rng(seed)
    behaviors = behaviors.validate()
    names = behaviors.preset if behaviors.preset != "mixed" else None
    hv_behaviors = (BehaviorSet("mixed", behaviors.mixing_seed).draw(n_hv)
                    if names is None else [names] * n_hv)

    vehicles: list[VehicleState] = []
    hv_params: dict[int, DriverParams] = {}

    def placed_ok(cand: VehicleState, min_gap: float = 8.0) -> bool:
        for other in vehicles:
            if other.lane == cand.lane and abs(other.x - cand.x) < (
                    other.length / 2 + cand.length / 2 + min_gap):
                return False
            if rectangles_overlap(other, cand):
                return False
        return True

    def place(vid: int, kind: str, lanes: list[int], x_lo: float, x_hi: float,
              v_lo: float, v_hi: float, behavior: str | None) -> VehicleState:
        for _ in range(_SPAWN_ATTEMPTS):
            lane = int(rng.choice(lanes))
            x = float(rng.uniform(x_lo, x_hi))
            if not road.lane_exists(lane, x):
                continue
            cand = VehicleState(id=vid, x=x, y=road.lane_y(lane),
                                v=float(rng.uniform(v_lo, v_hi)), lane=lane,
                                kind=kind, behavior=behavior)
            if placed_ok(cand):
                return cand
        raise ConfigurationError(
            f"could not place vehicle {vid}: scenario too dense")

    main_lanes = list(range(road.n_main))
    if spec.scenario == "merging":
        ramp = spec.ramp
        onset = ramp.onset
        for i in range(n_av):
            veh = place(i, "AV", [road.ramp_lane], onset - 90.0, onset - 25.0,
                        18.0, 24.0, None)
            vehicles.append(veh)
        for i in range(n_hv):
            behavior = hv_behaviors[i]
            veh = place(n_av + i, "HV", main_lanes, onset - 140.0,
                        onset + ramp.length, 16.0, 26.0, behavior)
            vehicles.append(veh)
            hv_params[veh.id] = params_for(behavior)
    else:
        x_lo, x_hi = 50.0, 50.0 + 30.0 * (n_av + n_hv)
        for i in range(n_av):
            vehicles.append(place(i, "AV", main_lanes, x_lo, x_hi,
                                  18.0, 26.0, None))
        for i in range(n_hv):
            behavior = hv_behaviors[i]
            v0 = params_for(behavior).v0
            veh = place(n_av + i, "HV", main_lanes, x_lo, x_hi,
                        0.6 * v0, 0.85 * v0, behavior)
            vehicles.append(veh)
            hv_params[veh.id] = params_for(behavior)

    vehicles.sort(key=lambda v: v.id)
    return World(road=road, vehicles=vehicles, hv_params=hv_params, seed=seed)
