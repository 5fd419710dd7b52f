"""Run configuration: YAML sections mapped onto the module config types.

Every section mirrors one dataclass; unknown sections or keys are rejected
with the offending ``section.key`` named, and values are type-checked
against the field defaults. Command-line overrides use the same path syntax
(``--set rl.gamma=0.9``) and are YAML-parsed, so numbers, booleans and
lists all work.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import yaml

from predrive.agent.qnet import QNetConfig
from predrive.agent.reward import SvoConfig
from predrive.agent.rollout import RolloutConfig
from predrive.agent.training import TrainConfig
from predrive.errors import ConfigurationError
from predrive.gp.kernels import Kernel
from predrive.hpn import HpnConfig
from predrive.observe import ObservationConfig
from predrive.safety import SafetyConfig

CONFIG_VERSION = 1


@dataclass(frozen=True)
class RunSection:
    run_id: str = "default"
    out_dir: str = "runs/default"
    seeds: tuple[int, ...] = (0,)
    eval_episodes: int = 20
    max_steps: int = 40

    def validate(self) -> None:
        if not self.seeds:
            raise ConfigurationError("run.seeds must be non-empty")
        if self.eval_episodes < 1 or self.max_steps < 1:
            raise ConfigurationError("run budgets must be >= 1")


@dataclass(frozen=True)
class SimSection:
    scenario: str = "merging"
    lanes: int = 3
    n_av: int = 2
    n_hv: int = 4
    behaviors: str = "mixed"
    dt_policy: float = 0.5

    def validate(self) -> None:
        if self.dt_policy <= 0:
            raise ConfigurationError("sim.dt_policy must be positive")
        if self.n_av < 1 or self.n_hv < 0:
            raise ConfigurationError("sim needs n_av >= 1 and n_hv >= 0")


@dataclass(frozen=True)
class HpnSection:
    n_history: int = 4
    m_pred: int = 8
    conv_channels: tuple[int, ...] = (8, 16)
    latent: int = 64
    fc_hidden: int = 128
    epochs: int = 6
    batch_size: int = 16
    lr: float = 1e-3
    pretrain_episodes: int = 6

    def validate(self) -> None:
        if self.n_history < 1 or self.m_pred < 0:
            raise ConfigurationError("hpn history/horizon out of range")
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigurationError("hpn training budget out of range")


@dataclass(frozen=True)
class RlSection:
    lr: float = 5e-4
    buffer_capacity: int = 8000
    batch_size: int = 64
    gamma: float = 0.95
    target_sync: int = 300
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 1500
    episodes: int = 24
    e_ini: int = 4
    n_iterations: int = 200
    conv_channels: tuple[int, ...] = (8, 16)
    fc_hidden: int = 128
    use_prediction: bool = True
    use_safety: bool = True
    r_unsafe: float = -1.0
    min_flagged_frac: float = 0.25

    def validate(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError("rl.gamma must be in [0, 1)")
        if not 0.0 <= self.eps_end <= self.eps_start <= 1.0:
            raise ConfigurationError("rl epsilon schedule out of range")


_SECTIONS: dict[str, type] = {
    "run": RunSection,
    "sim": SimSection,
    "observation": ObservationConfig,
    "gp": Kernel,
    "hpn": HpnSection,
    "rl": RlSection,
    "svo": SvoConfig,
    "safety": SafetyConfig,
}


def _check_type(section: str, name: str, default, value):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        if ok:
            value = float(value)
    elif isinstance(default, tuple):
        ok = isinstance(value, (list, tuple))
        if ok:
            value = tuple(value)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    else:
        ok = True
    if not ok:
        raise ConfigurationError(
            f"{section}.{name}: expected {type(default).__name__}, "
            f"got {value!r}")
    return value


def _build_section(section: str, cls: type, data: dict):
    proto = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(
            f"unknown key(s) in section {section!r}: "
            + ", ".join(f"{section}.{k}" for k in unknown))
    kwargs = {}
    for name, raw in data.items():
        kwargs[name] = _check_type(section, name, getattr(proto, name), raw)
    built = cls(**kwargs)
    if hasattr(built, "validate"):
        built.validate()
    return built


@dataclass(frozen=True)
class RunConfig:
    run: RunSection
    sim: SimSection
    observation: ObservationConfig
    gp: Kernel
    hpn: HpnSection
    rl: RlSection
    svo: SvoConfig
    safety: SafetyConfig

    # -- derived views over the module config types -------------------
    def hpn_config(self) -> HpnConfig:
        return HpnConfig(grid_h=self.observation.grid_h,
                         grid_w=self.observation.grid_w,
                         n_history=self.hpn.n_history,
                         k_rows=self.observation.max_vehicles,
                         conv_channels=self.hpn.conv_channels,
                         latent=self.hpn.latent,
                         fc_hidden=self.hpn.fc_hidden)

    def qnet_config(self) -> QNetConfig:
        n_frames = self.hpn.n_history
        if self.rl.use_prediction:
            n_frames += self.hpn.m_pred
        obs = self.observation
        return QNetConfig(grid_h=obs.grid_h, grid_w=obs.grid_w,
                          n_frames=n_frames, k_rows=obs.max_vehicles,
                          conv_channels=self.rl.conv_channels,
                          fc_hidden=self.rl.fc_hidden,
                          k_scale=(obs.long_extent, obs.lat_extent,
                                   obs.v_norm, 1.0))

    def rollout_config(self, use_prediction: bool | None = None) -> RolloutConfig:
        pred = self.rl.use_prediction if use_prediction is None else use_prediction
        return RolloutConfig(n_past=self.hpn.n_history,
                             m_pred=self.hpn.m_pred,
                             dt_policy=self.sim.dt_policy,
                             max_steps=self.run.max_steps,
                             use_prediction=pred)

    def train_config(self, seed: int) -> TrainConfig:
        rl = self.rl
        return TrainConfig(scenario=self.sim.scenario,
                           behaviors=self.sim.behaviors,
                           n_av=self.sim.n_av, n_hv=self.sim.n_hv,
                           episodes=rl.episodes, e_ini=rl.e_ini,
                           n_iterations=rl.n_iterations,
                           batch_size=rl.batch_size, gamma=rl.gamma,
                           lr=rl.lr, buffer_capacity=rl.buffer_capacity,
                           target_sync=rl.target_sync,
                           eps_decay_steps=rl.eps_decay_steps,
                           eps_start=rl.eps_start, eps_end=rl.eps_end,
                           r_unsafe=rl.r_unsafe,
                           min_flagged_frac=rl.min_flagged_frac,
                           use_safety=rl.use_safety, seed=seed)

    def to_dict(self) -> dict:
        out: dict = {"version": CONFIG_VERSION}
        for name in _SECTIONS:
            out[name] = dataclasses.asdict(getattr(self, name))
            for k, v in out[name].items():
                if isinstance(v, tuple):
                    out[name][k] = list(v)
        return out

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


def _merge_overrides(data: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(
                f"override {item!r} is not of the form section.key=value")
        path, raw = item.split("=", 1)
        parts = path.strip().split(".")
        if len(parts) != 2:
            raise ConfigurationError(
                f"override path {path!r} must be section.key")
        section, key = parts
        data.setdefault(section, {})
        if not isinstance(data[section], dict):
            raise ConfigurationError(f"section {section!r} is not a mapping")
        data[section][key] = yaml.safe_load(raw)
    return data


def load_config(path: str | None = None,
                overrides: list[str] | None = None) -> RunConfig:
    """Build a validated RunConfig from a YAML file plus overrides.

    ``path=None`` starts from defaults (handy for tests and ad-hoc runs).
    """
    data: dict = {}
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigurationError("config root must be a mapping")
        data = loaded
    data = _merge_overrides(dict(data), list(overrides or []))

    version = data.pop("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigurationError(
            f"unsupported config version {version!r} (expected {CONFIG_VERSION})")
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ConfigurationError(f"unknown config section(s): {unknown}")

    built = {}
    for name, cls in _SECTIONS.items():
        section_data = data.get(name, {})
        if not isinstance(section_data, dict):
            raise ConfigurationError(f"section {name!r} must be a mapping")
        built[name] = _build_section(name, cls, section_data)
    cfg = RunConfig(**built)
    # cross-section checks
    cfg.hpn_config().validate()
    cfg.qnet_config().validate()
    return cfg
