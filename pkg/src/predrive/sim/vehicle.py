"""Vehicle state record."""
from __future__ import annotations

import math
from dataclasses import dataclass

VEHICLE_LENGTH = 5.0
VEHICLE_WIDTH = 2.0


@dataclass
class VehicleState:
    """Pose and kinematics of one vehicle in the road frame.

    ``v`` is the speed along the heading; with near-axial highway headings it
    coincides with the longitudinal speed. ``lane`` tracks the nearest lane
    center and is refreshed by the world after each integration step.
    """

    id: int
    x: float
    y: float
    v: float
    psi: float = 0.0
    lane: int = 0
    length: float = VEHICLE_LENGTH
    width: float = VEHICLE_WIDTH
    kind: str = "HV"  # "AV" | "HV"
    behavior: str | None = None
    crashed: bool = False

    @property
    def front(self) -> float:
        return self.x + self.length / 2.0

    @property
    def rear(self) -> float:
        return self.x - self.length / 2.0

    @property
    def vx(self) -> float:
        return self.v * math.cos(self.psi)

    @property
    def vy(self) -> float:
        return self.v * math.sin(self.psi)

    def is_finite(self) -> bool:
        return all(map(math.isfinite, (self.x, self.y, self.v, self.psi)))


def rectangles_overlap(a: VehicleState, b: VehicleState) -> bool:
    """Axis-aligned footprint overlap in the road frame."""
    return (abs(a.x - b.x) < (a.length + b.length) / 2.0
            and abs(a.y - b.y) < (a.width + b.width) / 2.0)
