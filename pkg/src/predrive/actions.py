"""Discrete meta-action space shared by the simulator and the agents."""
from __future__ import annotations

from enum import IntEnum


class MetaAction(IntEnum):
    """High-level action executed by an autonomous vehicle over one policy step."""

    LANE_LEFT = 0
    IDLE = 1
    LANE_RIGHT = 2
    ACCELERATE = 3
    DECELERATE = 4


N_ACTIONS = len(MetaAction)

# Longitudinal command associated with each meta-action, m/s^2. Lane actions
# hold speed while the lateral maneuver runs.
ACTION_ACCEL = {
    MetaAction.LANE_LEFT: 0.0,
    MetaAction.IDLE: 0.0,
    MetaAction.LANE_RIGHT: 0.0,
    MetaAction.ACCELERATE: 2.0,
    MetaAction.DECELERATE: -2.0,
}
