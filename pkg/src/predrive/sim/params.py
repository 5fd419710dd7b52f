"""Driver model parameters and behavior presets.

The three behavior presets (aggressive / moderate / conservative) carry the
MOBIL politeness, lane-change threshold and safe-braking limits together with
the IDM time gap, minimum distance and acceleration limits. Preferred speed
``v0`` and the acceleration exponent ``delta`` are implementation defaults,
not part of the preset tables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from predrive.errors import ConfigurationError


@dataclass(frozen=True)
class DriverParams:
    """Combined MOBIL + IDM parameter set for one driver.

    Attributes:
        p: MOBIL politeness factor, in [0, 1].
        delta_a_th: lane-change incentive threshold, m/s^2.
        b_safe: safe braking limit imposed on the new follower, m/s^2.
        T0: safe time gap, s.
        d0: minimum standstill distance, m.
        a_max: acceleration limit, m/s^2.
        a_des: deceleration limit (positive magnitude), m/s^2.
        v0: preferred speed, m/s.
        delta: acceleration exponent (dimensionless).
    """

    p: float
    delta_a_th: float
    b_safe: float
    T0: float
    d0: float
    a_max: float
    a_des: float
    v0: float
    delta: float = 4.0

    def validate(self) -> "DriverParams":
        for name in ("T0", "d0", "a_max", "a_des", "v0"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"DriverParams.{name} must be > 0")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigurationError("DriverParams.p must be in [0, 1]")
        for name in ("p", "delta_a_th", "b_safe", "delta"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"DriverParams.{name} must be finite")
        return self


# Preferred-speed defaults per behavior; chosen here, not part of the preset
# parameter tables.
_V0_DEFAULTS = {"aggressive": 30.0, "moderate": 25.0, "conservative": 20.0}

BEHAVIOR_PRESETS: dict[str, DriverParams] = {
    "aggressive": DriverParams(
        p=0.0, delta_a_th=0.0, b_safe=12.0,
        T0=0.5, d0=1.0, a_max=7.0, a_des=12.0, v0=_V0_DEFAULTS["aggressive"],
    ),
    "moderate": DriverParams(
        p=0.3, delta_a_th=0.1, b_safe=6.0,
        T0=1.0, d0=2.0, a_max=3.0, a_des=7.0, v0=_V0_DEFAULTS["moderate"],
    ),
    "conservative": DriverParams(
        p=1.0, delta_a_th=0.4, b_safe=2.0,
        T0=3.0, d0=6.0, a_max=1.0, a_des=2.0, v0=_V0_DEFAULTS["conservative"],
    ),
}

PURE_PRESETS = ("aggressive", "moderate", "conservative")


@dataclass(frozen=True)
class BehaviorSet:
    """Behavior preset assignment for the human-driven fleet.

    ``preset`` is one of the pure presets or ``"mixed"``; mixed draws a pure
    preset uniformly per vehicle from ``mixing_seed``.
    """

    preset: str = "moderate"
    mixing_seed: int = 0

    def validate(self) -> "BehaviorSet":
        if self.preset not in PURE_PRESETS and self.preset != "mixed":
            raise ConfigurationError(f"unknown behavior preset {self.preset!r}")
        return self

    def draw(self, n: int) -> list[str]:
        """Behavior names for ``n`` HVs, deterministic in ``mixing_seed``."""
        if self.preset != "mixed":
            return [self.preset] * n
        rng = np.random.default_rng(self.mixing_seed)
        return [PURE_PRESETS[i] for i in rng.integers(0, len(PURE_PRESETS), size=n)]


def params_for(behavior: str, v0: float | None = None) -> DriverParams:
    """Preset parameters for a behavior name, optionally overriding ``v0``."""
    try:
        base = BEHAVIOR_PRESETS[behavior]
    except KeyError:
        raise ConfigurationError(f"unknown behavior preset {behavior!r}") from None
    if v0 is not None:
        base = replace(base, v0=v0)
    return base.validate()
