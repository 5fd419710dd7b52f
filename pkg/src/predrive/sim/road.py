"""Road geometry for the straight-highway, merging and exiting scenarios.

All scenarios use a straight road in a longitudinal/lateral frame: ``x`` runs
along the road, ``y`` across it. Lane ``i`` is centered at ``i * lane_width``
with lane 0 leftmost. The merging and exiting scenarios add one ramp lane on
the right (index ``lanes``): a merge ramp terminates at the end of its taper
section, an exit ramp begins at the taper onset and continues to the road end.
"""
from __future__ import annotations

from dataclasses import dataclass

from predrive.errors import ConfigurationError

SCENARIOS = ("highway", "merging", "exiting")


@dataclass(frozen=True)
class RampGeometry:
    """Taper section of a merge/exit ramp: lane changes between the ramp and
    the adjacent mainline lane are possible for ``onset <= x <= onset+length``."""

    onset: float
    length: float


@dataclass(frozen=True)
class RoadSpec:
    scenario: str = "highway"
    lanes: int = 3
    lane_width: float = 4.0
    length: float = 1500.0
    ramp: RampGeometry | None = None

    def validate(self) -> "RoadSpec":
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}")
        if self.lanes < 2:
            raise ConfigurationError("RoadSpec.lanes must be >= 2")
        if self.lane_width <= 0 or self.length <= 0:
            raise ConfigurationError("RoadSpec dimensions must be positive")
        if (self.ramp is None) != (self.scenario == "highway"):
            raise ConfigurationError(
                "ramp geometry is required iff the scenario has a ramp"
            )
        if self.ramp is not None:
            if self.ramp.onset < 0 or self.ramp.length <= 0:
                raise ConfigurationError("invalid ramp geometry")
            if self.ramp.onset + self.ramp.length > self.length:
                raise ConfigurationError("ramp extends past the road end")
        return self


def default_spec(scenario: str, lanes: int = 3, lane_width: float = 4.0,
                 length: float = 1500.0) -> RoadSpec:
    """RoadSpec with a standard ramp placement for the given scenario."""
    ramp = None
    if scenario == "merging":
        ramp = RampGeometry(onset=200.0, length=120.0)
    elif scenario == "exiting":
        ramp = RampGeometry(onset=300.0, length=150.0)
    return RoadSpec(scenario=scenario, lanes=lanes, lane_width=lane_width,
                    length=length, ramp=ramp).validate()


class Road:
    """Queryable lane geometry derived from a RoadSpec."""

    def __init__(self, spec: RoadSpec):
        self.spec = spec.validate()
        self.lane_width = spec.lane_width
        self.n_main = spec.lanes
        self.has_ramp = spec.ramp is not None
        self.ramp_lane = spec.lanes if self.has_ramp else None

    @property
    def n_lanes(self) -> int:
        return self.n_main + (1 if self.has_ramp else 0)

    def lane_y(self, lane: int) -> float:
        return lane * self.lane_width

    def nearest_lane(self, y: float) -> int:
        lane = int(round(y / self.lane_width))
        return min(max(lane, 0), self.n_lanes - 1)

    def lane_exists(self, lane: int, x: float) -> bool:
        if 0 <= lane < self.n_main:
            return True
        if lane != self.ramp_lane:
            return False
        ramp = self.spec.ramp
        if self.spec.scenario == "merging":
            return x <= ramp.onset + ramp.length
        return x >= ramp.onset  # exiting: ramp begins at the taper onset

    def lane_end_x(self, lane: int) -> float | None:
        """x where the lane terminates, or None for a through lane."""
        if self.spec.scenario == "merging" and lane == self.ramp_lane:
            return self.spec.ramp.onset + self.spec.ramp.length
        return None

    def can_change(self, from_lane: int, to_lane: int, x: float) -> bool:
        """Whether a lane change from_lane -> to_lane is permitted at x."""
        if abs(from_lane - to_lane) != 1:
            return False
        if not (self.lane_exists(from_lane, x) and self.lane_exists(to_lane, x)):
            return False
        # Crossing the mainline/ramp boundary is restricted to the taper.
        if self.ramp_lane is not None and self.ramp_lane in (from_lane, to_lane):
            ramp = self.spec.ramp
            if not ramp.onset <= x <= ramp.onset + ramp.length:
                return False
            if self.spec.scenario == "merging" and to_lane == self.ramp_lane:
                return False  # nobody enters a terminating merge ramp
        return True
