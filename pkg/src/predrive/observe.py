"""Hybrid observation for one AV: velocity-map grid plus kinematics matrix.

The velocity map is an ego-centered grid whose occupied cells encode relative
speed (0.5 = same speed as ego, brighter = faster, darker = slower, floor 0.01
so occupancy is never confused with empty space). The kinematics matrix lists
the ego row first, then the nearest perceived vehicles with ego-relative
positions and absolute speed/heading, zero-padded to a fixed row count with a
presence mask. A history ring buffer and the N-past/M-predicted state stack
complete the value-network input.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from predrive.sim.vehicle import VehicleState
from predrive.sim.world import World


@dataclass(frozen=True)
class ObservationConfig:
    grid_h: int = 16
    grid_w: int = 64
    long_extent: float = 60.0   # +- meters covered longitudinally
    lat_extent: float = 8.0     # +- meters covered laterally
    v_norm: float = 20.0        # relative-speed normalization, m/s
    max_vehicles: int = 8       # K rows including ego

    @property
    def cell_long(self) -> float:
        return 2.0 * self.long_extent / self.grid_w

    @property
    def cell_lat(self) -> float:
        return 2.0 * self.lat_extent / self.grid_h

    @property
    def ego_anchor(self) -> tuple[int, int]:
        return (self.grid_h // 2, self.grid_w // 2)


@dataclass
class VelocityMap:
    grid: np.ndarray  # (H, W) float32 in [0, 1]
    config: ObservationConfig


@dataclass
class KinematicsMatrix:
    """Fixed-shape per-vehicle kinematics: columns (x_rel, y_rel, v, psi)."""

    values: np.ndarray  # (max_vehicles, 4) float64
    mask: np.ndarray    # (max_vehicles,) bool
    ids: np.ndarray     # (max_vehicles,) int, -1 where absent

    def copy(self) -> "KinematicsMatrix":
        return KinematicsMatrix(self.values.copy(), self.mask.copy(),
                                self.ids.copy())


@dataclass
class Observation:
    vm: VelocityMap
    k: KinematicsMatrix
    t: int
    # True where the cell center lies on drivable road. None for synthetic
    # frames (predictions, hypothesis copies) whose frame has moved off the
    # ego position the mask was sampled at.
    road_mask: np.ndarray | None = None


@dataclass
class StateStack:
    """N past observations followed by M predicted ones; the VFN input."""

    past: list[Observation]
    predicted: list[Observation] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.past)

    @property
    def m(self) -> int:
        return len(self.predicted)

    def all_obs(self) -> list[Observation]:
        return list(self.past) + list(self.predicted)


def _perceived(world: World, ego: VehicleState,
               cfg: ObservationConfig) -> list[VehicleState]:
    out = []
    for veh in world.vehicles:
        if veh.id == ego.id:
            continue
        if (abs(veh.x - ego.x) <= cfg.long_extent
                and abs(veh.y - ego.y) <= cfg.lat_extent):
            out.append(veh)
    return out


def _paint(grid: np.ndarray, cfg: ObservationConfig, dx: float, dy: float,
           length: float, width: float, value: float) -> None:
    c_lo = int(np.floor((dx - length / 2 + cfg.long_extent) / cfg.cell_long))
    c_hi = int(np.ceil((dx + length / 2 + cfg.long_extent) / cfg.cell_long))
    r_lo = int(np.floor((dy - width / 2 + cfg.lat_extent) / cfg.cell_lat))
    r_hi = int(np.ceil((dy + width / 2 + cfg.lat_extent) / cfg.cell_lat))
    c_lo, c_hi = max(c_lo, 0), min(c_hi, cfg.grid_w)
    r_lo, r_hi = max(r_lo, 0), min(r_hi, cfg.grid_h)
    if c_lo < c_hi and r_lo < r_hi:
        grid[r_lo:r_hi, c_lo:c_hi] = value


def rasterize(world: World, ego_id: int,
              cfg: ObservationConfig | None = None) -> VelocityMap:
    """Ego-centered velocity map of the world around ``ego_id``."""
    cfg = cfg or ObservationConfig()
    ego = world.vehicle(ego_id)
    grid = np.zeros((cfg.grid_h, cfg.grid_w), dtype=np.float32)
    for veh in _perceived(world, ego, cfg):
        value = 0.5 + (veh.v - ego.v) / (2.0 * cfg.v_norm)
        value = min(max(value, 0.01), 1.0)
        _paint(grid, cfg, veh.x - ego.x, veh.y - ego.y,
               veh.length, veh.width, value)
    # ego painted last so its footprint is exactly 0.5
    _paint(grid, cfg, 0.0, 0.0, ego.length, ego.width, 0.5)
    return VelocityMap(grid=grid, config=cfg)


def extract_kinematics(world: World, ego_id: int,
                       cfg: ObservationConfig | None = None) -> KinematicsMatrix:
    """Ego-relative kinematics rows, nearest-first, zero padded."""
    cfg = cfg or ObservationConfig()
    ego = world.vehicle(ego_id)
    rows = np.zeros((cfg.max_vehicles, 4), dtype=np.float64)
    mask = np.zeros(cfg.max_vehicles, dtype=bool)
    ids = np.full(cfg.max_vehicles, -1, dtype=np.int64)

    rows[0] = (0.0, 0.0, ego.v, ego.psi)
    mask[0] = True
    ids[0] = ego.id

    others = _perceived(world, ego, cfg)
    others.sort(key=lambda v: (np.hypot(v.x - ego.x, v.y - ego.y), v.id))
    for i, veh in enumerate(others[:cfg.max_vehicles - 1], start=1):
        rows[i] = (veh.x - ego.x, veh.y - ego.y, veh.v, veh.psi)
        mask[i] = True
        ids[i] = veh.id
    return KinematicsMatrix(values=rows, mask=mask, ids=ids)


def drivable_mask(road, ego_x: float, ego_y: float,
                  cfg: ObservationConfig | None = None) -> np.ndarray:
    """Boolean grid over the ego window, True where the road is drivable.

    Cell centers are tested against the lane bands. The mainline is one
    contiguous band; a ramp contributes its own band only over the
    longitudinal range where it exists, so a terminating ramp shows up as
    a wall of non-drivable cells sliding toward the ego.
    """
    cfg = cfg or ObservationConfig()
    xs = ego_x - cfg.long_extent + (np.arange(cfg.grid_w) + 0.5) * cfg.cell_long
    ys = ego_y - cfg.lat_extent + (np.arange(cfg.grid_h) + 0.5) * cfg.cell_lat
    half = road.lane_width / 2.0
    mask = np.zeros((cfg.grid_h, cfg.grid_w), dtype=bool)
    rows_main = (ys >= -half) & (ys <= road.lane_y(road.n_main - 1) + half)
    mask[rows_main, :] = True
    if road.has_ramp:
        ramp_y = road.lane_y(road.ramp_lane)
        rows_ramp = (ys >= ramp_y - half) & (ys <= ramp_y + half)
        cols = np.fromiter((road.lane_exists(road.ramp_lane, float(x))
                            for x in xs), dtype=bool, count=cfg.grid_w)
        mask[np.ix_(rows_ramp, cols)] = True
    return mask


def observe(world: World, ego_id: int, t: int,
            cfg: ObservationConfig | None = None) -> Observation:
    cfg = cfg or ObservationConfig()
    ego = world.vehicle(ego_id)
    return Observation(vm=rasterize(world, ego_id, cfg),
                       k=extract_kinematics(world, ego_id, cfg), t=t,
                       road_mask=drivable_mask(world.road, ego.x, ego.y, cfg))


class HistoryBuffer:
    """Ring buffer of the last N observations with warm-up replication:
    until N real observations exist, the oldest one is repeated to fill."""

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("history length must be >= 1")
        self.n = n
        self._items: list[Observation] = []

    def push(self, obs: Observation) -> "HistoryBuffer":
        self._items.append(obs)
        if len(self._items) > self.n:
            self._items.pop(0)
        return self

    def __len__(self) -> int:
        return len(self._items)

    def snapshot(self) -> list[Observation]:
        if not self._items:
            raise ValueError("history is empty")
        pad = [self._items[0]] * (self.n - len(self._items))
        return pad + list(self._items)
