"""Action screening by predicted time-to-collision.

Candidate meta-actions are scored against the predicted motion of nearby
vehicles: the ego is rolled out kinematically (the action for one decision
step, then idle), every other vehicle follows the prediction chain, and the
per-step minimum pairwise TTC is aggregated with exponentially decaying
weights so that imminent conflict dominates distant conflict. An action is
unsafe if the weighted score drops below ``safe_threshold`` or any single
step falls under ``critical_threshold``. When every candidate is unsafe the
least-bad one (highest score) is returned as a fallback.

Vehicles are treated as circles under constant velocity within each step,
which keeps the pairwise TTC a closed-form quadratic.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .actions import ACTION_ACCEL, MetaAction
from .hpn import Hypothesis
from .observe import (KinematicsMatrix, Observation, ObservationConfig,
                      VelocityMap)


@dataclass(frozen=True)
class SafetyConfig:
    safe_threshold: float = 1.5
    critical_threshold: float = 0.5
    beta: float = 0.5          # per-step decay of TTC weights
    ttc_cap: float = 10.0
    m_steps: int = 8
    veh_radius: float = 2.5
    lane_width: float = 4.0
    lc_steps: int = 2          # decision steps a lane change spans


@dataclass
class SafetyVerdict:
    safe: bool
    score: float
    min_ttc: float
    step_ttc: np.ndarray


@dataclass
class SafetySelection:
    action: int
    verdicts: dict[int, SafetyVerdict]
    masked: list[int]
    fallback: bool


def ttc_pair(p_rel: np.ndarray, v_rel: np.ndarray, radius_sum: float) -> float:
    """Time until two constant-velocity circles touch; 0 if already
    overlapping, inf if they never will."""
    c = float(p_rel @ p_rel) - radius_sum * radius_sum
    if c <= 0.0:
        return 0.0
    a = float(v_rel @ v_rel)
    b = 2.0 * float(p_rel @ v_rel)
    if a < 1e-12:
        return np.inf
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return np.inf
    t = (-b - np.sqrt(disc)) / (2.0 * a)
    return t if t >= 0.0 else np.inf


def ego_rollout(v0: float, psi0: float, action: int, m_steps: int, dt: float,
                cfg: SafetyConfig) -> tuple[np.ndarray, np.ndarray]:
    """Ego positions and velocities in its frozen start frame.

    The commanded action is applied for the first step only (a lane change
    plays out over ``lc_steps``); after that the ego holds speed and lane.
    Returns (positions (m, 2), velocities (m, 2)) sampled at step ends.
    """
    pos = np.zeros((m_steps, 2))
    vel = np.zeros((m_steps, 2))
    accel = ACTION_ACCEL.get(MetaAction(action), 0.0)
    # lane 0 is leftmost and y grows with the lane index, so a left change
    # moves the ego toward negative y
    lat_total = 0.0
    if action == MetaAction.LANE_LEFT:
        lat_total = -cfg.lane_width
    elif action == MetaAction.LANE_RIGHT:
        lat_total = cfg.lane_width
    lat_rate = lat_total / (cfg.lc_steps * dt) if lat_total else 0.0
    x, y, v = 0.0, 0.0, float(v0)
    c, s = np.cos(psi0), np.sin(psi0)
    for k in range(m_steps):
        a = accel if k == 0 else 0.0
        vy_lat = lat_rate if (lat_total and k < cfg.lc_steps) else 0.0
        v_new = max(v + a * dt, 0.0)
        v_mid = 0.5 * (v + v_new)
        x += v_mid * c * dt
        y += v_mid * s * dt + vy_lat * dt
        v = v_new
        pos[k] = (x, y)
        vel[k] = (v * c, v * s + vy_lat)
    return pos, vel


def evaluate_action(v0: float, psi0: float, action: int,
                    hyps: list[Hypothesis], ego_id: int,
                    cfg: SafetyConfig | None = None,
                    dt: float = 0.5, *,
                    road_mask: np.ndarray | None = None,
                    grid_cfg: ObservationConfig | None = None) -> SafetyVerdict:
    """Score one candidate action against predicted traffic.

    ``hyps`` come from the prediction chain; positions are mapped into the
    chain's frozen frame via each hypothesis offset. Steps beyond the
    available hypotheses reuse the last one (pessimistically extended by its
    own constant velocity would cost another integration; holding the frame
    is close enough over the tail and strictly more conservative near cap).

    When ``road_mask``/``grid_cfg`` are given (the drivable-cell grid of the
    current observation), any rollout step whose position leaves the
    perceived road counts as an immediate collision with the boundary:
    that step's TTC is 0. Steps past the grid edge are left alone.
    """
    cfg = cfg or SafetyConfig()
    m = cfg.m_steps
    ego_pos, ego_vel = ego_rollout(v0, psi0, action, m, dt, cfg)
    step_ttc = np.full(m, cfg.ttc_cap)
    if road_mask is not None and grid_cfg is not None:
        for k in range(m):
            col = int(np.floor((ego_pos[k, 0] + grid_cfg.long_extent)
                               / grid_cfg.cell_long))
            row = int(np.floor((ego_pos[k, 1] + grid_cfg.lat_extent)
                               / grid_cfg.cell_lat))
            if (0 <= row < grid_cfg.grid_h and 0 <= col < grid_cfg.grid_w
                    and not road_mask[row, col]):
                step_ttc[k] = 0.0
    rsum = 2.0 * cfg.veh_radius
    for k in range(m):
        hyp = hyps[min(k, len(hyps) - 1)] if hyps else None
        if hyp is None:
            continue
        kmat = hyp.obs.k
        worst = np.inf
        for i in range(kmat.ids.size):
            if not kmat.mask[i] or int(kmat.ids[i]) == ego_id:
                continue
            x, y, v, psi = kmat.values[i]
            p_other = np.array([x + hyp.offset[0], y + hyp.offset[1]])
            v_other = np.array([v * np.cos(psi), v * np.sin(psi)])
            ttc = ttc_pair(p_other - ego_pos[k], v_other - ego_vel[k], rsum)
            worst = min(worst, ttc)
        step_ttc[k] = min(step_ttc[k], worst)
    weights = np.exp(-cfg.beta * np.arange(m))
    score = float(weights @ step_ttc / weights.sum())
    safe = bool(score >= cfg.safe_threshold
                and np.all(step_ttc >= cfg.critical_threshold))
    return SafetyVerdict(safe=safe, score=score,
                         min_ttc=float(step_ttc.min()), step_ttc=step_ttc)


def select_safe_action(v0: float, psi0: float, candidates: list[int],
                       hyps: list[Hypothesis], ego_id: int,
                       cfg: SafetyConfig | None = None,
                       dt: float = 0.5, *,
                       road_mask: np.ndarray | None = None,
                       grid_cfg: ObservationConfig | None = None
                       ) -> SafetySelection:
    """First safe candidate in the given priority order, else the candidate
    with the best safety score."""
    cfg = cfg or SafetyConfig()
    verdicts = {a: evaluate_action(v0, psi0, a, hyps, ego_id, cfg, dt,
                                   road_mask=road_mask, grid_cfg=grid_cfg)
                for a in candidates}
    masked = []
    for a in candidates:
        if verdicts[a].safe:
            return SafetySelection(action=a, verdicts=verdicts,
                                   masked=masked, fallback=False)
        masked.append(a)
    best = max(candidates, key=lambda a: (verdicts[a].score, -candidates.index(a)))
    return SafetySelection(action=best, verdicts=verdicts,
                           masked=masked, fallback=True)


def cs_hypotheses(obs: Observation, m_steps: int, dt: float) -> list[Hypothesis]:
    """Constant-velocity stand-in for the prediction chain.

    Used when no learned predictor is available so the safety layer always
    has trajectories to score. Velocity maps are carried over unchanged
    (the safety math never reads them).
    """
    out = []
    k0 = obs.k
    ego_v, ego_psi = k0.values[0, 2], k0.values[0, 3]
    for step in range(1, m_steps + 1):
        offset = np.array([ego_v * np.cos(ego_psi) * dt * step,
                           ego_v * np.sin(ego_psi) * dt * step])
        values = k0.values.copy()
        for i in range(k0.ids.size):
            if not k0.mask[i]:
                continue
            x, y, v, psi = k0.values[i]
            values[i, 0] = x + v * np.cos(psi) * dt * step - offset[0]
            values[i, 1] = y + v * np.sin(psi) * dt * step - offset[1]
        kmat = KinematicsMatrix(values=values, mask=k0.mask.copy(),
                                ids=k0.ids.copy())
        out.append(Hypothesis(
            obs=Observation(vm=VelocityMap(grid=obs.vm.grid, config=obs.vm.config),
                            k=kmat, t=obs.t + step),
            step=step, source="cs", offset=offset))
    return out
