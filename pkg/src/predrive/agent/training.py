"""Fleet training: semi-sequential double-DQN over a shared policy.

All AVs act with one policy, but only one learns at a time: during an
episode the learner AV follows its evolving online network while the others
hold the last disseminated copy. After each episode the learner performs a
fixed budget of gradient updates on the shared replay buffer, its weights
are broadcast to the fleet, and the learner role rotates. Early episodes
only fill the buffer. Unsafe proposals vetoed by the safety layer become
absorbing transitions with a fixed penalty so the value function learns to
avoid them without ever executing them.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from predrive.actions import N_ACTIONS
from predrive.errors import ConfigurationError
from predrive.gp.kernels import Kernel
from predrive.hpn import PredictorModel
from predrive.observe import ObservationConfig
from predrive.safety import SafetyConfig, select_safe_action
from predrive.sim.params import BehaviorSet
from predrive.sim.road import default_spec
from predrive.sim.world import spawn_scenario

from .ddqn import ddqn_update, epsilon_schedule
from .qnet import QNetConfig, QNetwork, encode_stack
from .replay import ReplayBuffer, Transition
from .reward import SvoConfig
from .rollout import ActResult, RolloutConfig, run_episode
from predrive.nn.adam import Adam

AGENT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    scenario: str = "merging"
    behaviors: str = "mixed"
    n_av: int = 2
    n_hv: int = 4
    episodes: int = 24
    e_ini: int = 4                 # buffer-filling episodes before updates
    n_iterations: int = 200        # gradient updates per learner turn
    batch_size: int = 64
    gamma: float = 0.95
    lr: float = 5e-4
    buffer_capacity: int = 8000
    target_sync: int = 300
    eps_decay_steps: int = 1000
    eps_start: float = 1.0
    eps_end: float = 0.05
    r_unsafe: float = -1.0
    min_flagged_frac: float = 0.25
    use_safety: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.e_ini >= self.episodes:
            raise ConfigurationError("e_ini must leave training episodes")
        if self.n_av < 1 or self.n_hv < 0:
            raise ConfigurationError("need at least one AV")
        if not 0.0 <= self.min_flagged_frac <= 1.0:
            raise ConfigurationError("min_flagged_frac must be in [0, 1]")


class GreedyController:
    """Evaluation policy: greedy on Q, screened by the safety layer."""

    def __init__(self, net: QNetwork, q_cfg: QNetConfig,
                 safety_cfg: SafetyConfig | None, dt_policy: float):
        self.net = net
        self.q_cfg = q_cfg
        self.safety_cfg = safety_cfg
        self.dt = dt_policy

    def _q(self, net, enc):
        vm, k = enc
        return net.forward((vm[None], k[None]))[0]

    def decide(self, stack, hyps, ego):
        """Full decision for one query: (ActResult, q row, selection).

        The selection is None when the safety layer is disabled.
        """
        enc = encode_stack(stack, self.q_cfg)
        q = self._q(self.net, enc)
        order = [int(a) for a in np.argsort(-q, kind="stable")]
        if self.safety_cfg is None:
            return ActResult(action=order[0], proposed=order[0], enc=enc), q, None
        cur = stack.past[-1]
        sel = select_safe_action(ego.v, ego.psi, order, hyps, ego.id,
                                 self.safety_cfg, self.dt,
                                 road_mask=cur.road_mask,
                                 grid_cfg=cur.vm.config)
        res = ActResult(action=sel.action, proposed=order[0],
                        masked=sel.masked, fallback=sel.fallback, enc=enc)
        return res, q, sel

    def act(self, av_id, stack, hyps, ego) -> ActResult:
        return self.decide(stack, hyps, ego)[0]

    def record(self, *args) -> None:
        pass


class TrainController(GreedyController):
    """Epsilon-greedy acting plus transition capture.

    The learner AV reads the online network; every other AV reads the
    frozen fleet copy. Vetoed proposals are pushed immediately as flagged
    absorbing transitions.
    """

    def __init__(self, online: QNetwork, frozen: QNetwork, q_cfg: QNetConfig,
                 safety_cfg: SafetyConfig | None, dt_policy: float,
                 learner_id: int, buffer: ReplayBuffer, cfg: TrainConfig,
                 rng: np.random.Generator, step_offset: int):
        super().__init__(online, q_cfg, safety_cfg, dt_policy)
        self.frozen = frozen
        self.learner_id = learner_id
        self.buffer = buffer
        self.cfg = cfg
        self.rng = rng
        self.steps = step_offset
        self.eps = epsilon_schedule(self.steps, cfg.eps_decay_steps,
                                    cfg.eps_start, cfg.eps_end)

    def act(self, av_id, stack, hyps, ego) -> ActResult:
        enc = encode_stack(stack, self.q_cfg)
        net = self.net if av_id == self.learner_id else self.frozen
        if av_id == self.learner_id:
            self.steps += 1
            self.eps = epsilon_schedule(self.steps, self.cfg.eps_decay_steps,
                                        self.cfg.eps_start, self.cfg.eps_end)
        if self.rng.random() < self.eps:
            proposed = int(self.rng.integers(N_ACTIONS))
        else:
            proposed = int(np.argmax(self._q(net, enc)))
        if self.safety_cfg is None:
            return ActResult(action=proposed, proposed=proposed, enc=enc)
        # exploration keeps a fixed candidate order after the proposal so
        # the fallback ranking is reproducible
        order = [proposed] + [a for a in range(N_ACTIONS) if a != proposed]
        cur = stack.past[-1]
        sel = select_safe_action(ego.v, ego.psi, order, hyps, ego.id,
                                 self.safety_cfg, self.dt,
                                 road_mask=cur.road_mask,
                                 grid_cfg=cur.vm.config)
        for a in sel.masked:
            self.buffer.push(Transition(state=enc, action=a,
                                        reward=self.cfg.r_unsafe,
                                        next_state=None, terminal=True,
                                        flagged=True))
        return ActResult(action=sel.action, proposed=proposed,
                         masked=sel.masked, fallback=sel.fallback, enc=enc)

    def record(self, av_id, stack, res: ActResult, reward, next_stack,
               terminal, crashed) -> None:
        nxt = None
        if next_stack is not None:
            nxt = encode_stack(next_stack, self.q_cfg)
        self.buffer.push(Transition(state=res.enc, action=res.action,
                                    reward=reward, next_state=nxt,
                                    terminal=terminal,
                                    flagged=bool(crashed)))


@dataclass
class EpisodeStat:
    episode: int
    learner: int
    steps: int
    crashed: bool
    merged: bool | None
    av_mean_speed: float
    reward_mean: float
    epsilon: float
    buffer_size: int
    updates: int
    loss_mean: float


@dataclass
class TrainResult:
    net: QNetwork
    q_cfg: QNetConfig
    stats: list[EpisodeStat]
    updates: int


def train_fleet(q_cfg: QNetConfig, cfg: TrainConfig,
                rollout: RolloutConfig | None = None, *,
                predictor: PredictorModel | None = None,
                obs_cfg: ObservationConfig | None = None,
                svo: SvoConfig | None = None,
                safety_cfg: SafetyConfig | None = None,
                kernel: Kernel | None = None) -> TrainResult:
    cfg.validate()
    rollout = rollout or RolloutConfig()
    safety = safety_cfg if cfg.use_safety else None
    spec = default_spec(cfg.scenario)
    behaviors = BehaviorSet(cfg.behaviors, mixing_seed=cfg.seed)
    if cfg.use_safety and safety is None:
        safety = SafetyConfig()

    online = QNetwork(q_cfg, seed=cfg.seed)
    frozen = online.clone()
    target = online.clone()
    opt = Adam(online.n_params, lr=cfg.lr)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    rng = np.random.default_rng(cfg.seed + 1)

    stats: list[EpisodeStat] = []
    updates = 0
    eps_steps = 0
    for ep in range(cfg.episodes):
        learner = ep % cfg.n_av
        world = spawn_scenario(spec, behaviors, cfg.n_av, cfg.n_hv,
                               seed=cfg.seed * 100003 + ep)
        controller = TrainController(online, frozen, q_cfg, safety,
                                     rollout.dt_policy, learner, buffer,
                                     cfg, rng, eps_steps)
        log = run_episode(world, controller, predictor=predictor,
                          cfg=rollout, obs_cfg=obs_cfg, svo=svo,
                          kernel=kernel)
        eps_steps = controller.steps

        losses: list[float] = []
        if ep >= cfg.e_ini and len(buffer) >= cfg.batch_size:
            for _ in range(cfg.n_iterations):
                batch = buffer.sample(cfg.batch_size, rng,
                                      cfg.min_flagged_frac)
                losses.append(ddqn_update(online, target, batch,
                                          cfg.gamma, opt))
                updates += 1
                if updates % cfg.target_sync == 0:
                    target.set_params(online.get_params())
            frozen.set_params(online.get_params())

        reward_sum = sum(sum(rec.rewards.values()) for rec in log.records)
        n_r = sum(len(rec.rewards) for rec in log.records)
        stats.append(EpisodeStat(
            episode=ep, learner=learner, steps=log.n_steps,
            crashed=log.crashed, merged=log.merged,
            av_mean_speed=log.av_mean_speed,
            reward_mean=reward_sum / max(n_r, 1),
            epsilon=controller.eps, buffer_size=len(buffer),
            updates=updates,
            loss_mean=float(np.mean(losses)) if losses else float("nan")))
    return TrainResult(net=online, q_cfg=q_cfg, stats=stats, updates=updates)


def save_agent(result_net: QNetwork, path: str) -> None:
    meta = {"version": AGENT_FORMAT_VERSION,
            "config": dataclasses.asdict(result_net.cfg)}
    np.savez(path,
             meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
             params=result_net.get_params())


def load_agent(path: str) -> QNetwork:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != AGENT_FORMAT_VERSION:
            raise ConfigurationError(
                f"unsupported agent file version {meta.get('version')}")
        cfg_d = dict(meta["config"])
        cfg_d["conv_channels"] = tuple(cfg_d["conv_channels"])
        cfg_d["k_scale"] = tuple(cfg_d["k_scale"])
        net = QNetwork(QNetConfig(**cfg_d), seed=0)
        net.set_params(np.asarray(data["params"], dtype=np.float64))
    return net
