"""Run orchestration behind the CLI: train, evaluate, predict-bench, replay.

Every command works off a validated ``RunConfig`` and writes its artifacts
under ``run.out_dir``:

  config.yaml         snapshot of the effective configuration (train)
  checkpoints/        agent + predictor weights per seed (train)
  training_log.csv    per-episode training statistics (train)
  metrics.csv         per-episode evaluation rows (evaluate)
  summary.csv         bootstrap aggregation over metrics rows (evaluate)
  predictions.csv     forecasting benchmark table (predict-bench)
  observations.csv    flattened per-step observation dump (replay)
  verdicts.csv        per-action safety scores and the chosen action (replay)

Everything except the CSV timestamp headers is deterministic in
(config, seed).
"""
from __future__ import annotations

import csv
import dataclasses
import os
import time

import numpy as np

from predrive.actions import N_ACTIONS
from predrive.agent.qnet import QNetwork
from predrive.agent.rollout import ActResult, build_hypotheses, run_episode
from predrive.agent.training import (GreedyController, load_agent, save_agent,
                                     train_fleet)
from predrive.errors import ConfigurationError
from predrive.gp.bench import make_suite, run_bench, train_learned
from predrive.hpn import (PredictorModel, build_hpn_samples, build_predictor,
                          fit_k_stats, hpn_train, load_predictor,
                          save_predictor)
from predrive.observe import HistoryBuffer, observe
from predrive.safety import select_safe_action
from predrive.sim.params import BehaviorSet
from predrive.sim.road import default_spec
from predrive.sim.world import spawn_scenario, step_world

from .config import RunConfig
from .metrics import (METRICS_VERSION, MetricsRecord, aggregate,
                      write_metrics_csv, write_summary_csv)

# Spawn-seed streams. Training episodes use cfg.seed * 100003 + ep inside
# train_fleet; the offsets below keep pretraining and evaluation worlds off
# that stream so the evaluator never replays a training scene.
_PRETRAIN_OFFSET = 424243
_EVAL_OFFSET = 848487


def _run_dir(cfg: RunConfig) -> str:
    path = cfg.run.out_dir
    os.makedirs(os.path.join(path, "checkpoints"), exist_ok=True)
    return path


def _agent_path(cfg: RunConfig, seed: int) -> str:
    return os.path.join(cfg.run.out_dir, "checkpoints", f"agent_seed{seed}.npz")


def _predictor_path(cfg: RunConfig, seed: int) -> str:
    return os.path.join(cfg.run.out_dir, "checkpoints",
                        f"predictor_seed{seed}.npz")


# ---------------------------------------------------------------------------
# predictor pretraining

class RandomController:
    """Uniform-random proposals, optionally screened by the safety layer.

    Used only to generate observation sequences for predictor pretraining;
    the screen keeps rollouts alive long enough to be useful.
    """

    def __init__(self, rng: np.random.Generator, safety_cfg, dt: float):
        self.rng = rng
        self.safety_cfg = safety_cfg
        self.dt = dt

    def act(self, av_id, stack, hyps, ego) -> ActResult:
        order = [int(a) for a in self.rng.permutation(N_ACTIONS)]
        if self.safety_cfg is None or not hyps:
            return ActResult(action=order[0], proposed=order[0])
        cur = stack.past[-1] if stack is not None and stack.past else None
        sel = select_safe_action(ego.v, ego.psi, order, hyps, ego.id,
                                 self.safety_cfg, self.dt,
                                 road_mask=None if cur is None else cur.road_mask,
                                 grid_cfg=None if cur is None else cur.vm.config)
        return ActResult(action=sel.action, proposed=order[0],
                         masked=sel.masked, fallback=sel.fallback)

    def record(self, *args) -> None:
        pass


def collect_observation_episodes(cfg: RunConfig, seed: int,
                                 n_episodes: int) -> list[list]:
    """Roll random safety-screened policies; one observation list per AV per
    episode (each is a valid consecutive sequence for sample building)."""
    spec = default_spec(cfg.sim.scenario, lanes=cfg.sim.lanes)
    behaviors = BehaviorSet(cfg.sim.behaviors, mixing_seed=seed)
    rng = np.random.default_rng(seed)
    safety = cfg.safety if cfg.rl.use_safety else None
    controller = RandomController(rng, safety, cfg.sim.dt_policy)
    rollout = dataclasses.replace(cfg.rollout_config(), use_prediction=False,
                                  collect_predictions=False)
    sequences: list[list] = []
    for ep in range(n_episodes):
        world = spawn_scenario(spec, behaviors, cfg.sim.n_av, cfg.sim.n_hv,
                               seed=seed * 100003 + _PRETRAIN_OFFSET + ep)
        per_av = {av: [] for av in world.av_ids()}
        histories = {av: HistoryBuffer(rollout.n_past) for av in per_av}
        for t in range(rollout.max_steps):
            actions = {}
            for av in per_av:
                obs = observe(world, av, t, cfg.observation)
                per_av[av].append(obs)
                histories[av].push(obs)
                hyps = []
                if safety is not None:
                    hyps = build_hypotheses(None, histories[av].snapshot(),
                                            rollout, cfg.gp)
                ego = world.vehicle(av)
                actions[av] = controller.act(av, None, hyps, ego).action
            step_world(world, actions, cfg.sim.dt_policy)
            if world.any_av_crashed():
                break
        sequences.extend(per_av.values())
    return sequences


def train_predictor_for_seed(cfg: RunConfig, seed: int) -> tuple[PredictorModel, list[float]]:
    sequences = collect_observation_episodes(cfg, seed,
                                             cfg.hpn.pretrain_episodes)
    samples = []
    for seq in sequences:
        samples.extend(build_hpn_samples(seq, cfg.hpn.n_history))
    if not samples:
        raise ConfigurationError(
            "predictor pretraining produced no samples; raise "
            "hpn.pretrain_episodes or run.max_steps")
    model = build_predictor(cfg.hpn_config(), seed=seed)
    losses = hpn_train(model, samples, epochs=cfg.hpn.epochs,
                       batch_size=cfg.hpn.batch_size, lr=cfg.hpn.lr,
                       seed=seed)
    return model, losses


# ---------------------------------------------------------------------------
# train

_TRAIN_LOG_FIELDS = ["run_id", "seed", "episode", "learner", "steps",
                     "crashed", "merged", "av_mean_speed", "reward_mean",
                     "epsilon", "buffer_size", "updates", "loss_mean"]


def cmd_train(cfg: RunConfig) -> dict[int, object]:
    """Train the fleet for every seed; returns seed -> TrainResult."""
    run_dir = _run_dir(cfg)
    with open(os.path.join(run_dir, "config.yaml"), "w") as fh:
        fh.write(cfg.to_yaml())

    log_rows = []
    results: dict[int, object] = {}
    for seed in cfg.run.seeds:
        predictor = None
        if cfg.rl.use_prediction:
            predictor, _ = train_predictor_for_seed(cfg, seed)
            save_predictor(predictor, _predictor_path(cfg, seed))
        result = train_fleet(cfg.qnet_config(), cfg.train_config(seed),
                             cfg.rollout_config(), predictor=predictor,
                             obs_cfg=cfg.observation, svo=cfg.svo,
                             safety_cfg=cfg.safety, kernel=cfg.gp)
        save_agent(result.net, _agent_path(cfg, seed))
        results[seed] = result
        for st in result.stats:
            log_rows.append([cfg.run.run_id, seed, st.episode, st.learner,
                             st.steps, int(st.crashed),
                             "" if st.merged is None else int(st.merged),
                             f"{st.av_mean_speed:.6f}",
                             f"{st.reward_mean:.6f}", f"{st.epsilon:.6f}",
                             st.buffer_size, st.updates,
                             f"{st.loss_mean:.6f}"])

    with open(os.path.join(run_dir, "training_log.csv"), "w", newline="") as fh:
        fh.write(f"# predrive-training v{METRICS_VERSION} "
                 f"generated={time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
        writer = csv.writer(fh)
        writer.writerow(_TRAIN_LOG_FIELDS)
        writer.writerows(log_rows)
    return results


# ---------------------------------------------------------------------------
# evaluate

def _load_or_fresh(cfg: RunConfig, seed: int, allow_fresh: bool):
    agent_file = _agent_path(cfg, seed)
    if os.path.exists(agent_file):
        net = load_agent(agent_file)
    elif allow_fresh:
        net = QNetwork(cfg.qnet_config(), seed=seed)
    else:
        raise ConfigurationError(
            f"no trained agent at {agent_file}; run the train command first "
            "or pass --allow-fresh")
    predictor = None
    if cfg.rl.use_prediction:
        pred_file = _predictor_path(cfg, seed)
        if os.path.exists(pred_file):
            predictor = load_predictor(pred_file)
        elif allow_fresh:
            predictor = build_predictor(cfg.hpn_config(), seed=seed)
            predictor.k_stats = _fallback_k_stats(cfg, seed)
        else:
            raise ConfigurationError(
                f"no trained predictor at {pred_file}; run the train command "
                "first or pass --allow-fresh")
    return net, predictor


def _fallback_k_stats(cfg: RunConfig, seed: int):
    """Standardization stats for a fresh predictor, from one short rollout."""
    sequences = collect_observation_episodes(cfg, seed, 1)
    samples = []
    for seq in sequences:
        samples.extend(build_hpn_samples(seq, cfg.hpn.n_history))
    if not samples:
        raise ConfigurationError("could not derive kinematics statistics")
    return fit_k_stats(samples)


def evaluate_seed(cfg: RunConfig, seed: int, net: QNetwork,
                  predictor: PredictorModel | None) -> list[MetricsRecord]:
    """Greedy evaluation episodes for one seed, as metrics rows."""
    spec = default_spec(cfg.sim.scenario, lanes=cfg.sim.lanes)
    behaviors = BehaviorSet(cfg.sim.behaviors, mixing_seed=seed)
    safety = cfg.safety if cfg.rl.use_safety else None
    controller = GreedyController(net, cfg.qnet_config(), safety,
                                  cfg.sim.dt_policy)
    rollout = dataclasses.replace(cfg.rollout_config(),
                                  collect_predictions=True)
    records = []
    for ep in range(cfg.run.eval_episodes):
        world = spawn_scenario(spec, behaviors, cfg.sim.n_av, cfg.sim.n_hv,
                               seed=seed * 100003 + _EVAL_OFFSET + ep)
        log = run_episode(world, controller, predictor=predictor,
                          cfg=rollout, obs_cfg=cfg.observation, svo=cfg.svo,
                          kernel=cfg.gp)
        records.append(MetricsRecord(
            run_id=cfg.run.run_id, seed=seed, episode=ep,
            crashes=log.crashes,
            crash_pct=100.0 if log.crashed else 0.0,
            distance=max(log.av_distance, 0.0),
            mean_speed=log.av_mean_speed,
            pe=log.pe_mean, pre=log.pre_mean,
            masked_count=log.masked_total))
    return records


def cmd_evaluate(cfg: RunConfig, *, allow_fresh: bool = False,
                 bootstrap_b: int = 2000) -> tuple[list, list]:
    """Evaluate every seed; writes metrics.csv + summary.csv under out_dir."""
    run_dir = _run_dir(cfg)
    records: list[MetricsRecord] = []
    for seed in cfg.run.seeds:
        net, predictor = _load_or_fresh(cfg, seed, allow_fresh)
        records.extend(evaluate_seed(cfg, seed, net, predictor))
    summary = aggregate(records, b=bootstrap_b)
    write_metrics_csv(os.path.join(run_dir, "metrics.csv"), records)
    write_summary_csv(os.path.join(run_dir, "summary.csv"), summary)
    return records, summary


# ---------------------------------------------------------------------------
# predict-bench

def cmd_predict_bench(cfg: RunConfig, *, n_per_kind: int = 36,
                      train_n_per_kind: int = 80) -> list[tuple]:
    """Forecasting benchmark table; writes predictions.csv under out_dir."""
    run_dir = _run_dir(cfg)
    seed = cfg.run.seeds[0]
    m = cfg.hpn.m_pred
    dt = cfg.sim.dt_policy
    train_cases = make_suite(train_n_per_kind, seed=seed + 7,
                             m=m, dt=dt)
    learned = train_learned(train_cases, m, dt, seed=seed)
    cases = make_suite(n_per_kind, seed=seed + 42, m=m, dt=dt)
    rows = run_bench(cases, m=m, dt=dt, kernel=cfg.gp, learned=learned)
    path = os.path.join(run_dir, "predictions.csv")
    with open(path, "w", newline="") as fh:
        fh.write(f"# predrive-predictions v{METRICS_VERSION} "
                 f"generated={time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
        writer = csv.writer(fh)
        writer.writerow(["method", "scenario", "horizon_step", "pe"])
        for method, scenario, step, pe in rows:
            writer.writerow([method, scenario, step, f"{pe:.6f}"])
    return rows


# ---------------------------------------------------------------------------
# replay

class ReplayController(GreedyController):
    """Greedy controller that keeps the full decision trace for dumping."""

    def __init__(self, *args):
        super().__init__(*args)
        self.trace: list[tuple] = []   # (av_id, obs, q, selection, result)

    def act(self, av_id, stack, hyps, ego) -> ActResult:
        res, q, sel = self.decide(stack, hyps, ego)
        self.trace.append((av_id, stack.past[-1], q, sel, res))
        return res


def _observation_header(cfg: RunConfig) -> list[str]:
    obs = cfg.observation
    cols = ["t", "av"]
    cols += [f"vm_{i:04d}" for i in range(obs.grid_h * obs.grid_w)]
    for i in range(obs.max_vehicles):
        cols += [f"k{i}_x", f"k{i}_y", f"k{i}_v", f"k{i}_psi",
                 f"k{i}_id", f"k{i}_mask"]
    return cols


def cmd_replay(cfg: RunConfig, *, episode: int = 0,
               allow_fresh: bool = True) -> int:
    """Re-run one evaluation episode and dump observations + verdicts.

    Returns the number of steps replayed.
    """
    run_dir = _run_dir(cfg)
    seed = cfg.run.seeds[0]
    net, predictor = _load_or_fresh(cfg, seed, allow_fresh)
    spec = default_spec(cfg.sim.scenario, lanes=cfg.sim.lanes)
    behaviors = BehaviorSet(cfg.sim.behaviors, mixing_seed=seed)
    safety = cfg.safety if cfg.rl.use_safety else None
    controller = ReplayController(net, cfg.qnet_config(), safety,
                                  cfg.sim.dt_policy)
    world = spawn_scenario(spec, behaviors, cfg.sim.n_av, cfg.sim.n_hv,
                           seed=seed * 100003 + _EVAL_OFFSET + episode)
    n_av = len(world.av_ids())
    log = run_episode(world, controller, predictor=predictor,
                      cfg=cfg.rollout_config(), obs_cfg=cfg.observation,
                      svo=cfg.svo, kernel=cfg.gp)

    stamp = time.strftime("%Y-%m-%dT%H:%M:%S")
    with open(os.path.join(run_dir, "observations.csv"), "w", newline="") as fh:
        fh.write(f"# predrive-replay v{METRICS_VERSION} generated={stamp}\n")
        writer = csv.writer(fh)
        writer.writerow(_observation_header(cfg))
        for i, (av_id, obs, _, _, _) in enumerate(controller.trace):
            row = [i // n_av, av_id]
            row += [f"{v:.6f}" for v in obs.vm.grid.reshape(-1)]
            for r in range(cfg.observation.max_vehicles):
                row += [f"{v:.6f}" for v in obs.k.values[r]]
                row += [int(obs.k.ids[r]), int(obs.k.mask[r])]
            writer.writerow(row)

    with open(os.path.join(run_dir, "verdicts.csv"), "w", newline="") as fh:
        fh.write(f"# predrive-verdicts v{METRICS_VERSION} generated={stamp}\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "av", "action", "q", "score", "min_ttc",
                         "safe", "masked", "chosen"])
        for i, (av_id, _, q, sel, res) in enumerate(controller.trace):
            t = i // n_av
            for a in range(N_ACTIONS):
                verdict = sel.verdicts.get(a) if sel is not None else None
                writer.writerow([
                    t, av_id, a, f"{q[a]:.6f}",
                    "nan" if verdict is None else f"{verdict.score:.6f}",
                    "nan" if verdict is None else f"{verdict.min_ttc:.6f}",
                    1 if verdict is None or verdict.safe else 0,
                    1 if a in res.masked else 0,
                    1 if a == res.action else 0])
    return log.n_steps
