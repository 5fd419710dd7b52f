"""Rule-based human-driver control: IDM car following and MOBIL lane changes."""
from __future__ import annotations

import math
from typing import Iterable, Optional

from predrive.sim.params import DriverParams
from predrive.sim.road import Road
from predrive.sim.vehicle import VehicleState

# Leaders further ahead than this are ignored.
LEADER_HORIZON = 100.0
_MIN_GAP = 1e-3


def gap_between(ego: VehicleState, leader: VehicleState) -> float:
    """Bumper-to-bumper gap, negative if the footprints overlap longitudinally."""
    return leader.rear - ego.front


def idm_accel(ego: VehicleState, leader: Optional[VehicleState],
              params: DriverParams) -> float:
    """IDM acceleration for ``ego`` following ``leader`` (may be None).

    Output is clamped to [-a_des, a_max]. Without a leader the gap term
    vanishes and the model relaxes toward the preferred speed.
    """
    if not ego.is_finite() or (leader is not None and not leader.is_finite()):
        raise ValueError("idm_accel requires finite vehicle states")
    free = 1.0 - (max(ego.v, 0.0) / params.v0) ** params.delta
    if leader is None:
        accel = params.a_max * free
    else:
        d = gap_between(ego, leader)
        if d <= 0.0:
            return -params.a_des
        dv = ego.v - leader.v
        d_star = params.d0 + max(
            0.0, ego.v * params.T0
            + ego.v * dv / (2.0 * math.sqrt(params.a_max * params.a_des)))
        accel = params.a_max * (free - (d_star / max(d, _MIN_GAP)) ** 2)
    return min(max(accel, -params.a_des), params.a_max)


def find_leader(ego: VehicleState, others: Iterable[VehicleState],
                lane: int | None = None) -> Optional[VehicleState]:
    """Nearest vehicle ahead of ego in ``lane`` (default: ego's lane)."""
    lane = ego.lane if lane is None else lane
    best = None
    for other in others:
        if other.id == ego.id or other.lane != lane:
            continue
        if other.x > ego.x and other.x - ego.x <= LEADER_HORIZON:
            if best is None or other.x < best.x:
                best = other
    return best


def find_follower(ego: VehicleState, others: Iterable[VehicleState],
                  lane: int | None = None) -> Optional[VehicleState]:
    """Nearest vehicle behind ego in ``lane`` (default: ego's lane)."""
    lane = ego.lane if lane is None else lane
    best = None
    for other in others:
        if other.id == ego.id or other.lane != lane:
            continue
        if other.x < ego.x and ego.x - other.x <= LEADER_HORIZON:
            if best is None or other.x > best.x:
                best = other
    return best


def _hypothetical(vehicle: VehicleState, lane: int) -> VehicleState:
    # Only the lane index matters for gap/accel evaluation; y is untouched.
    moved = VehicleState(**{**vehicle.__dict__})
    moved.lane = lane
    return moved


def mobil_decide(ego: VehicleState, neighbors: list[VehicleState],
                 params: DriverParams, road: Road,
                 virtual_leader=None) -> str:
    """MOBIL lane-change decision: ``"keep"``, ``"left"`` or ``"right"``.

    Applies the safety criterion (new follower must not brake harder than
    b_safe) and the politeness-weighted incentive criterion, with all
    hypothetical accelerations evaluated through :func:`idm_accel`.
    ``virtual_leader`` optionally injects a stationary obstacle (e.g. the end
    of a merge ramp) as the ego's current-lane leader fallback.
    """
    others = [n for n in neighbors if n.id != ego.id and not n.crashed]

    cur_leader = find_leader(ego, others)
    if cur_leader is None and virtual_leader is not None:
        cur_leader = virtual_leader
    a_ego = idm_accel(ego, cur_leader, params)

    old_follower = find_follower(ego, others)
    a_o = idm_accel(old_follower, ego, params) if old_follower is not None else 0.0

    candidates: list[tuple[float, int, str]] = []
    for direction, target in (("left", ego.lane - 1), ("right", ego.lane + 1)):
        if not road.can_change(ego.lane, target, ego.x):
            continue
        new_leader = find_leader(ego, others, lane=target)
        new_follower = find_follower(ego, others, lane=target)

        ego_moved = _hypothetical(ego, target)
        a_ego_new = idm_accel(ego_moved, new_leader, params)

        if new_follower is not None:
            a_n = idm_accel(new_follower, new_leader, params)
            a_n_new = idm_accel(new_follower, ego_moved, params)
            if a_n_new < -params.b_safe:
                continue  # safety veto
        else:
            a_n = a_n_new = 0.0

        a_o_new = (idm_accel(old_follower, cur_leader, params)
                   if old_follower is not None else 0.0)

        incentive = (a_ego_new - a_ego
                     + params.p * ((a_n_new - a_n) + (a_o_new - a_o)))
        if incentive > params.delta_a_th:
            # order key prefers the larger margin, then left on ties
            candidates.append((incentive, 0 if direction == "left" else 1,
                               direction))

    if not candidates:
        return "keep"
    candidates.sort(key=lambda c: (-c[0], c[1]))
    return candidates[0][2]
