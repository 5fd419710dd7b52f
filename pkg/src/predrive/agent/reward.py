"""Social-utility reward.

Each vehicle earns a primitive reward from weighted features (crash
indicator, normalized speed, normalized headway). An ego's training reward
blends its own term with the fleet's and with nearby human drivers' through
a social-value angle phi: cos(phi) weighs the egoistic part, sin(phi) the
altruistic part. Human-driver terms are divided by distance^lambda (floored
at one meter) so the ego is mostly accountable for traffic it actually
affects, and only perceived humans are counted.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from predrive.sim.driver import LEADER_HORIZON, find_leader, gap_between
from predrive.sim.vehicle import VehicleState
from predrive.sim.world import World


@dataclass(frozen=True)
class SvoConfig:
    phi: float = np.pi / 4.0
    dist_lambda: float = 1.0
    w_crash: float = -1.0
    w_speed: float = 0.4
    w_headway: float = 0.6
    v_max: float = 30.0
    headway_norm: float = 60.0
    perception: float = 60.0


@dataclass
class RewardBreakdown:
    ego: float
    fleet: float
    human: float
    total: float


def vehicle_reward(world: World, veh: VehicleState, crashed_now: bool,
                   cfg: SvoConfig) -> float:
    """Weighted feature sum for one vehicle on the post-step world."""
    x_crash = 1.0 if crashed_now else 0.0
    x_speed = float(np.clip(veh.v / cfg.v_max, 0.0, 1.0))
    leader = find_leader(veh, world.vehicles)
    if leader is None:
        x_head = 1.0
    else:
        gap = min(max(gap_between(veh, leader), 0.0), LEADER_HORIZON)
        x_head = float(np.clip(gap / cfg.headway_norm, 0.0, 1.0))
    return (cfg.w_crash * x_crash + cfg.w_speed * x_speed
            + cfg.w_headway * x_head)


def social_reward(before: World, after: World, ego_id: int,
                  cfg: SvoConfig | None = None) -> RewardBreakdown:
    """Reward for the transition ``before -> after`` from ``ego_id``'s view.

    Crash terms fire only on vehicles that first crashed during this step.
    """
    cfg = cfg or SvoConfig()
    crashed_before = {v.id for v in before.vehicles if v.crashed}
    ego = after.vehicle(ego_id)
    r_ego = vehicle_reward(after, ego, ego.crashed and ego_id not in crashed_before,
                           cfg)
    r_fleet = 0.0
    r_human = 0.0
    for veh in after.vehicles:
        if veh.id == ego_id:
            continue
        new_crash = veh.crashed and veh.id not in crashed_before
        if veh.kind == "AV":
            r_fleet += vehicle_reward(after, veh, new_crash, cfg)
        else:
            d = float(np.hypot(veh.x - ego.x, veh.y - ego.y))
            if d > cfg.perception:
                continue
            r = vehicle_reward(after, veh, new_crash, cfg)
            r_human += r / max(d, 1.0) ** cfg.dist_lambda
    total = (np.cos(cfg.phi) * r_ego
             + np.sin(cfg.phi) * (r_fleet + r_human))
    return RewardBreakdown(ego=r_ego, fleet=r_fleet, human=r_human,
                           total=float(total))
