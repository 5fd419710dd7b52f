"""Episode loop shared by training and evaluation.

Per decision step, each AV gets an observation pushed into its history
buffer, a hypothesis chain rolled out from that history (or a
constant-velocity stand-in when no predictor is used), and a state stack.
A controller turns stacks into actions; the world then advances one policy
step and per-AV social rewards are computed on the transition. Transitions
are delivered back to the controller one step late (once the successor
stack exists), except for terminal steps.

Controllers implement::

    act(av_id, stack, hyps, ego) -> ActResult
    record(av_id, stack, act_result, reward, next_stack, terminal, crashed)

``record`` may be a no-op for evaluation-only controllers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from predrive.gp.kernels import Kernel
from predrive.hpn import Hypothesis, PredictorModel, prediction_chain
from predrive.observe import HistoryBuffer, Observation, ObservationConfig, StateStack, observe
from predrive.safety import cs_hypotheses
from predrive.sim.vehicle import VehicleState
from predrive.sim.world import World, step_world

from .reward import SvoConfig, social_reward


@dataclass(frozen=True)
class RolloutConfig:
    n_past: int = 4
    m_pred: int = 8
    dt_policy: float = 0.5
    max_steps: int = 60
    use_prediction: bool = True        # predicted frames join the state stack
    collect_predictions: bool = False  # score hypotheses against realized motion


@dataclass
class ActResult:
    action: int
    proposed: int
    masked: list[int] = field(default_factory=list)
    fallback: bool = False
    enc: object = None    # controller-side encoding cache, opaque here


@dataclass
class StepRecord:
    t_index: int
    time: float
    vehicles: list[tuple]          # (id, kind, x, y, v, lane, crashed)
    actions: dict[int, int]
    proposed: dict[int, int]
    masked: dict[int, list[int]]
    fallback: dict[int, bool]
    rewards: dict[int, float]


@dataclass
class EpisodeLog:
    records: list[StepRecord]
    crashed: bool
    ran_off: bool
    n_steps: int
    ramp_av_ids: list[int]
    merged: bool | None            # None outside the merging scenario
    av_speed_sum: float = 0.0
    hv_speed_sum: float = 0.0
    av_speed_n: int = 0
    hv_speed_n: int = 0
    av_distance: float = 0.0       # mean distance traveled by the AVs
    crashes: int = 0               # vehicles crashed by episode end
    masked_total: int = 0
    pe_sum: float = 0.0            # chain position error vs realized motion
    pe_n: int = 0
    pre_sum: float = 0.0           # one-step observation prediction error
    pre_n: int = 0

    @property
    def av_mean_speed(self) -> float:
        return self.av_speed_sum / max(self.av_speed_n, 1)

    @property
    def hv_mean_speed(self) -> float:
        return self.hv_speed_sum / max(self.hv_speed_n, 1)

    @property
    def pe_mean(self) -> float:
        return self.pe_sum / self.pe_n if self.pe_n else float("nan")

    @property
    def pre_mean(self) -> float:
        return self.pre_sum / self.pre_n if self.pre_n else float("nan")


def _snapshot(world: World) -> list[tuple]:
    return [(v.id, v.kind, round(v.x, 3), round(v.y, 3), round(v.v, 3),
             v.lane, v.crashed) for v in world.vehicles]


def build_hypotheses(predictor: PredictorModel | None,
                     past: list[Observation], cfg: RolloutConfig,
                     kernel: Kernel | None) -> list[Hypothesis]:
    if cfg.m_pred <= 0:
        return []
    if predictor is not None:
        return prediction_chain(predictor, past, m_steps=cfg.m_pred,
                                dt=cfg.dt_policy, kernel=kernel)
    return cs_hypotheses(past[-1], cfg.m_pred, cfg.dt_policy)


def _score_predictions(log: EpisodeLog, world: World, t: int, av: int,
                       obs: Observation, ledger: list[tuple],
                       prev_first, k_stats, m_pred: int) -> None:
    """Fold realized positions into the PE/PRE accumulators.

    ``ledger`` holds (t0, ego_xy at t0, hypotheses) tuples for ``av``;
    ``prev_first`` is the one-step-ahead observation predicted at t-1.
    """
    from predrive.hpn import pre_loss

    if prev_first is not None:
        log.pre_sum += pre_loss(prev_first, obs, k_stats)
        log.pre_n += 1
    live = {v.id: (v.x, v.y) for v in world.vehicles}
    for t0, ego_xy, hyp_list in ledger:
        k = t - t0
        if not 1 <= k <= len(hyp_list):
            continue
        hyp = hyp_list[k - 1]
        kmat = hyp.obs.k
        errs = []
        for i in range(kmat.ids.size):
            vid = int(kmat.ids[i])
            if not kmat.mask[i] or vid == av or vid not in live:
                continue
            px = ego_xy[0] + hyp.offset[0] + kmat.values[i, 0]
            py = ego_xy[1] + hyp.offset[1] + kmat.values[i, 1]
            errs.append(np.hypot(px - live[vid][0], py - live[vid][1]))
        if errs:
            log.pe_sum += float(np.mean(errs))
            log.pe_n += 1
    ledger[:] = [e for e in ledger if t - e[0] < m_pred]


def run_episode(world: World, controller, *,
                predictor: PredictorModel | None = None,
                cfg: RolloutConfig | None = None,
                obs_cfg: ObservationConfig | None = None,
                svo: SvoConfig | None = None,
                kernel: Kernel | None = None) -> EpisodeLog:
    cfg = cfg or RolloutConfig()
    obs_cfg = obs_cfg or ObservationConfig()
    svo = svo or SvoConfig()
    av_ids = world.av_ids()
    if not av_ids:
        raise ValueError("world has no AVs to control")
    ramp_avs = [v.id for v in world.vehicles
                if v.kind == "AV" and v.lane == world.road.ramp_lane]
    histories = {av: HistoryBuffer(cfg.n_past) for av in av_ids}
    pending: dict[int, tuple] = {}
    log = EpisodeLog(records=[], crashed=False, ran_off=False, n_steps=0,
                     ramp_av_ids=ramp_avs,
                     merged=None if world.road.spec.scenario != "merging" else False)
    start_x = {av: world.vehicle(av).x for av in av_ids}
    ledger: dict[int, list[tuple]] = {av: [] for av in av_ids}
    prev_first: dict[int, Observation | None] = {av: None for av in av_ids}
    k_stats = predictor.k_stats if predictor is not None else None

    terminal = False
    for t in range(cfg.max_steps):
        stacks: dict[int, StateStack] = {}
        hyps: dict[int, list[Hypothesis]] = {}
        for av in av_ids:
            obs = observe(world, av, t, obs_cfg)
            histories[av].push(obs)
            past = histories[av].snapshot()
            if cfg.collect_predictions:
                _score_predictions(log, world, t, av, obs, ledger[av],
                                   prev_first[av], k_stats, cfg.m_pred)
            h = build_hypotheses(predictor, past, cfg, kernel)
            hyps[av] = h
            if cfg.collect_predictions and h:
                ego = world.vehicle(av)
                ledger[av].append((t, (ego.x, ego.y), h))
                prev_first[av] = h[0].obs
            predicted = [hp.obs for hp in h] if cfg.use_prediction else []
            stacks[av] = StateStack(past=past, predicted=predicted)
            if av in pending:
                p_stack, p_res, p_reward = pending.pop(av)
                controller.record(av, p_stack, p_res, p_reward,
                                  stacks[av], False, False)

        results: dict[int, ActResult] = {}
        for av in av_ids:
            ego = world.vehicle(av)
            results[av] = controller.act(av, stacks[av], hyps[av], ego)

        before = world.copy()
        step_world(world, {av: results[av].action for av in av_ids},
                   cfg.dt_policy)
        rewards = {av: social_reward(before, world, av, svo).total
                   for av in av_ids}

        for veh in world.vehicles:
            if veh.crashed:
                continue
            if veh.kind == "AV":
                log.av_speed_sum += veh.v
                log.av_speed_n += 1
            else:
                log.hv_speed_sum += veh.v
                log.hv_speed_n += 1
        log.records.append(StepRecord(
            t_index=t, time=round(world.t, 3), vehicles=_snapshot(world),
            actions={av: int(results[av].action) for av in av_ids},
            proposed={av: int(results[av].proposed) for av in av_ids},
            masked={av: list(results[av].masked) for av in av_ids},
            fallback={av: results[av].fallback for av in av_ids},
            rewards={av: round(rewards[av], 6) for av in av_ids}))
        log.n_steps = t + 1

        log.masked_total += sum(len(results[av].masked) for av in av_ids)

        crashed_now = world.any_av_crashed()
        terminal = crashed_now or t == cfg.max_steps - 1
        for av in av_ids:
            if terminal:
                controller.record(av, stacks[av], results[av], rewards[av],
                                  None, True, crashed_now)
            else:
                pending[av] = (stacks[av], results[av], rewards[av])
        if crashed_now:
            log.crashed = True
            log.ran_off = any(vid in world.ran_off_road for vid in av_ids)
            break

    log.crashes = sum(1 for v in world.vehicles if v.crashed)
    log.av_distance = float(np.mean([world.vehicle(av).x - start_x[av]
                                     for av in av_ids]))
    if log.merged is not None and not log.crashed:
        n_main = world.road.n_main
        log.merged = all(world.vehicle(av).lane < n_main for av in ramp_avs)
    return log
