"""Hybrid observation predictor.

An encoder/decoder network consumes the last N observations (velocity maps
stacked as channels plus flattened kinematics history) and emits the next
observation: a predicted velocity map and a predicted kinematics matrix.
A physics-based correction then overwrites the kinematic rows with
GP-extrapolated states, which keeps multi-step rollouts from drifting the
way raw network feedback does.

Frames. Each observation is ego-centered at its own timestamp. The network
is trained on real consecutive observations, so its output lives in the
*next* ego frame. GP extrapolation happens in the frame of the latest input
observation (the "anchor"); the predicted ego displacement re-anchors those
rows before they replace the network's. The chain accumulates the per-step
ego displacement in ``Hypothesis.offset`` so consumers can map any predicted
row back into the frozen frame of the chain start.
"""
from __future__ import annotations

import dataclasses
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalError
from .gp.forecast import VehicleTrack, predict_indirect
from .gp.kernels import Kernel
from .nn.adam import Adam
from .nn.layers import Conv2d, ConvTranspose2d, Linear, ReLU
from .nn.net import ParamNet
from .observe import KinematicsMatrix, Observation, VelocityMap

FORMAT_VERSION = 1


@dataclass(frozen=True)
class HpnConfig:
    """Architecture knobs for the predictor.

    Defaults are the compact configuration; ``conv_channels`` and ``latent``
    scale it up. Every conv halves both spatial dims (k=3, stride 2, pad 1),
    so ``grid_h`` must survive ``len(conv_channels)`` halvings.
    """

    grid_h: int = 16
    grid_w: int = 64
    n_history: int = 4
    k_rows: int = 8
    conv_channels: tuple[int, ...] = (8, 16)
    latent: int = 64
    fc_hidden: int = 128

    def validate(self) -> None:
        if self.n_history < 1:
            raise ConfigurationError("n_history must be >= 1")
        if not self.conv_channels:
            raise ConfigurationError("conv_channels must be non-empty")
        h, w = self.grid_h, self.grid_w
        for _ in self.conv_channels:
            if h % 2 or w % 2:
                raise ConfigurationError(
                    "grid size must halve cleanly through the conv stack")
            h //= 2
            w //= 2

    @property
    def k_flat(self) -> int:
        return self.n_history * self.k_rows * 4


@dataclass
class KStats:
    """Per-column standardization for kinematics rows (x, y, v, psi)."""

    mean: np.ndarray = field(default_factory=lambda: np.zeros(4))
    std: np.ndarray = field(default_factory=lambda: np.ones(4))

    def apply(self, values: np.ndarray, mask: np.ndarray) -> np.ndarray:
        z = (values - self.mean) / self.std
        return z * mask[..., None]

    def invert(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean

    @staticmethod
    def fit(rows: np.ndarray) -> "KStats":
        if rows.size == 0:
            return KStats()
        mean = rows.mean(axis=0)
        std = np.maximum(rows.std(axis=0), 1e-6)
        return KStats(mean=mean, std=std)


class PredictorNet(ParamNet):
    """Two-branch encoder, additive fusion, two-head decoder."""

    def __init__(self, cfg: HpnConfig, seed: int):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        sizes = [(cfg.grid_h, cfg.grid_w)]
        c_prev = cfg.n_history
        for i, c in enumerate(cfg.conv_channels):
            conv = Conv2d(c_prev, c, k=3, stride=2, pad=1)
            self.add(f"enc{i}", conv)
            self.add(f"enc{i}_relu", ReLU())
            sizes.append(conv.out_hw(*sizes[-1]))
            c_prev = c
        self._sizes = sizes
        self._flat = cfg.conv_channels[-1] * sizes[-1][0] * sizes[-1][1]
        self.add("enc_fc", Linear(self._flat, cfg.latent))
        self.add("kin_fc1", Linear(cfg.k_flat, cfg.fc_hidden))
        self.add("kin_relu", ReLU())
        self.add("kin_fc2", Linear(cfg.fc_hidden, cfg.latent))
        self.add("fuse_relu", ReLU())
        self.add("dec_fc", Linear(cfg.latent, self._flat))
        self.add("dec_relu", ReLU())
        chans = list(cfg.conv_channels)
        for i in range(len(chans) - 1, -1, -1):
            c_out = chans[i - 1] if i > 0 else 1
            self.add(f"dec{i}", ConvTranspose2d(chans[i], c_out, sizes[i],
                                                k=3, stride=2, pad=1))
            if i > 0:
                self.add(f"dec{i}_relu", ReLU())
        self.add("kdec_fc1", Linear(cfg.latent, cfg.fc_hidden))
        self.add("kdec_relu", ReLU())
        self.add("kdec_fc2", Linear(cfg.fc_hidden, cfg.k_rows * 4))
        self.finalize(seed)

    def forward(self, x_vm: np.ndarray, x_k: np.ndarray):
        """x_vm (B, N, H, W), x_k (B, N*rows*4) -> ((B, H, W), (B, rows*4))."""
        cfg = self.cfg
        h = x_vm
        for i in range(len(cfg.conv_channels)):
            h = self._f(f"enc{i}", h)
            h = self._f(f"enc{i}_relu", h)
        self._enc_shape = h.shape
        h = self._f("enc_fc", h.reshape(h.shape[0], -1))
        k = self._f("kin_fc1", x_k)
        k = self._f("kin_relu", k)
        k = self._f("kin_fc2", k)
        z = self._f("fuse_relu", h + k)
        d = self._f("dec_fc", z)
        d = self._f("dec_relu", d)
        hh, ww = self._sizes[-1]
        d = d.reshape(d.shape[0], cfg.conv_channels[-1], hh, ww)
        for i in range(len(cfg.conv_channels) - 1, -1, -1):
            d = self._f(f"dec{i}", d)
            if i > 0:
                d = self._f(f"dec{i}_relu", d)
        kd = self._f("kdec_fc1", z)
        kd = self._f("kdec_relu", kd)
        kd = self._f("kdec_fc2", kd)
        return d[:, 0], kd

    def backward(self, d_vm: np.ndarray, d_kz: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        self.begin_grad()
        dz = self._b("kdec_fc2", d_kz)
        dz = self._b("kdec_relu", dz)
        dz = self._b("kdec_fc1", dz)
        d = d_vm[:, None]
        for i in range(len(cfg.conv_channels)):
            if i > 0:
                d = self._b(f"dec{i}_relu", d)
            d = self._b(f"dec{i}", d)
        d = self._b("dec_relu", d.reshape(d.shape[0], -1))
        dz = dz + self._b("dec_fc", d)
        dz = self._b("fuse_relu", dz)
        # fusion was an elementwise add: gradient copies to both branches
        dk = self._b("kin_fc2", dz)
        dk = self._b("kin_relu", dk)
        self._b("kin_fc1", dk)
        dh = self._b("enc_fc", dz).reshape(self._enc_shape)
        for i in range(len(cfg.conv_channels) - 1, -1, -1):
            dh = self._b(f"enc{i}_relu", dh)
            dh = self._b(f"enc{i}", dh)
        return self.grad


@dataclass
class PredictorModel:
    net: PredictorNet
    config: HpnConfig
    k_stats: KStats = field(default_factory=KStats)


def build_predictor(config: HpnConfig | None = None, seed: int = 0) -> PredictorModel:
    cfg = config if config is not None else HpnConfig()
    return PredictorModel(net=PredictorNet(cfg, seed), config=cfg)


# ---------------------------------------------------------------------------
# batch assembly

def _history_tensors(model: PredictorModel,
                     histories: list[tuple[Observation, ...]]):
    cfg = model.config
    b = len(histories)
    x_vm = np.empty((b, cfg.n_history, cfg.grid_h, cfg.grid_w))
    x_k = np.empty((b, cfg.n_history, cfg.k_rows, 4))
    for bi, hist in enumerate(histories):
        if len(hist) != cfg.n_history:
            raise ValueError(
                f"history length {len(hist)} != n_history {cfg.n_history}")
        for ni, obs in enumerate(hist):
            x_vm[bi, ni] = obs.vm.grid
            x_k[bi, ni] = model.k_stats.apply(obs.k.values, obs.k.mask)
    return x_vm, x_k.reshape(b, -1)


def hpn_forward(model: PredictorModel,
                history: list[Observation]) -> Observation:
    """Predict the observation one step past ``history[-1]``.

    The returned kinematics matrix reuses the ids and mask of the latest
    input frame; absent rows are zeroed.
    """
    x_vm, x_k = _history_tensors(model, [tuple(history)])
    vm_pred, kz = model.net.forward(x_vm, x_k)
    last = history[-1]
    grid = np.clip(vm_pred[0], 0.0, 1.0).astype(np.float32)
    values = model.k_stats.invert(
        kz[0].reshape(model.config.k_rows, 4))
    values = values * last.k.mask[:, None]
    k = KinematicsMatrix(values=values, mask=last.k.mask.copy(),
                         ids=last.k.ids.copy())
    return Observation(vm=VelocityMap(grid=grid, config=last.vm.config),
                       k=k, t=last.t + 1)


# ---------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class HpnSample:
    history: tuple[Observation, ...]
    target: Observation


def build_hpn_samples(episode: list[Observation], n_history: int) -> list[HpnSample]:
    """Sliding windows over one ego's consecutive observations."""
    out = []
    for i in range(len(episode) - n_history):
        out.append(HpnSample(history=tuple(episode[i:i + n_history]),
                             target=episode[i + n_history]))
    return out


def fit_k_stats(samples: list[HpnSample]) -> KStats:
    rows = []
    for s in samples:
        for obs in (*s.history, s.target):
            if obs.k.mask.any():
                rows.append(obs.k.values[obs.k.mask])
    return KStats.fit(np.concatenate(rows, axis=0) if rows else np.empty((0, 4)))


def _target_tensors(model: PredictorModel, targets: list[Observation]):
    cfg = model.config
    b = len(targets)
    y_vm = np.empty((b, cfg.grid_h, cfg.grid_w))
    y_kz = np.empty((b, cfg.k_rows, 4))
    w_k = np.empty((b, cfg.k_rows, 4))
    for bi, obs in enumerate(targets):
        y_vm[bi] = obs.vm.grid
        y_kz[bi] = model.k_stats.apply(obs.k.values, obs.k.mask)
        w_k[bi] = np.repeat(obs.k.mask[:, None], 4, axis=1)
    return y_vm, y_kz.reshape(b, -1), w_k.reshape(b, -1)


def _batch_loss_grad(model: PredictorModel, batch: list[HpnSample]):
    x_vm, x_k = _history_tensors(model, [s.history for s in batch])
    y_vm, y_kz, w_k = _target_tensors(model, [s.target for s in batch])
    vm_pred, kz = model.net.forward(x_vm, x_k)
    r_vm = vm_pred - y_vm
    r_k = (kz - y_kz) * w_k
    count = r_vm.size + w_k.sum()
    loss = (np.sum(r_vm * r_vm) + np.sum(r_k * r_k)) / count
    grad = model.net.backward(2.0 * r_vm / count, 2.0 * r_k / count)
    return loss, grad


def hpn_train(model: PredictorModel, samples: list[HpnSample], *,
              epochs: int = 10, batch_size: int = 16, lr: float = 1e-3,
              seed: int = 0, freeze_stats: bool = False) -> list[float]:
    """Minimize joint MSE over predicted map cells and standardized
    kinematics entries. Returns the mean loss per epoch.

    Standardization stats are fitted from ``samples`` unless ``freeze_stats``
    keeps the ones already on the model.
    """
    if not samples:
        raise ValueError("empty training set")
    if not freeze_stats:
        model.k_stats = fit_k_stats(samples)
    rng = np.random.default_rng(seed)
    opt = Adam(model.net.n_params, lr=lr)
    history = []
    for _ in range(epochs):
        order = rng.permutation(len(samples))
        total = 0.0
        nb = 0
        for start in range(0, len(samples), batch_size):
            batch = [samples[i] for i in order[start:start + batch_size]]
            loss, grad = _batch_loss_grad(model, batch)
            if not np.isfinite(loss):
                raise NumericalError(
                    f"non-finite training loss at epoch {len(history)}")
            opt.step(model.net.params, grad)
            total += loss
            nb += 1
        history.append(total / nb)
    return history


# ---------------------------------------------------------------------------
# hybrid correction and the rollout chain

def hybrid_correct(pred: Observation,
                   gp_rows: dict[int, np.ndarray]) -> Observation:
    """Overwrite predicted kinematic rows with physics-extrapolated ones.

    ``gp_rows`` maps vehicle id to an (x, y, v, psi) row already expressed
    in the predicted observation's frame. Rows without a match and the
    velocity map are left untouched.
    """
    k = pred.k.copy()
    for i in range(k.ids.size):
        if k.mask[i] and int(k.ids[i]) in gp_rows:
            k.values[i] = gp_rows[int(k.ids[i])]
    return Observation(vm=pred.vm, k=k, t=pred.t)


@dataclass(frozen=True)
class Hypothesis:
    """One predicted future observation.

    ``offset`` is the predicted ego displacement since the chain anchor, so
    frozen-frame positions are ``obs.k.values[:, :2] + offset`` (and the ego
    itself sits at ``offset``).
    """

    obs: Observation
    step: int
    source: str
    offset: np.ndarray


def _gp_step_rows(window: list[Observation], dt: float,
                  kernel: Kernel) -> dict[int, np.ndarray]:
    """One-step extrapolation for every vehicle visible in the anchor frame.

    Returns rows (x, y, v, psi) in the *anchor* frame (the frame of
    ``window[-1]``). Vehicles with fewer than two distinct-time sightings
    fall back to constant velocity.
    """
    anchor = window[-1]
    rows: dict[int, np.ndarray] = {}
    tracks = []
    for i in range(anchor.k.ids.size):
        if not anchor.k.mask[i]:
            continue
        vid = int(anchor.k.ids[i])
        ts, vs, ps = [], [], []
        for obs in window:
            j = np.flatnonzero((obs.k.ids == vid) & obs.k.mask)
            if j.size == 0:
                continue
            t_rel = (obs.t - anchor.t) * dt
            if ts and t_rel <= ts[-1]:
                continue  # replicated warm-up frames share a timestamp
            ts.append(t_rel)
            vs.append(float(obs.k.values[j[0], 2]))
            ps.append(float(obs.k.values[j[0], 3]))
        x0, y0 = anchor.k.values[i, :2]
        v0, p0 = anchor.k.values[i, 2:]
        if len(ts) < 2:
            rows[vid] = np.array([x0 + v0 * dt * np.cos(p0),
                                  y0 + v0 * dt * np.sin(p0), v0, p0])
            continue
        n = len(ts)
        tracks.append(VehicleTrack(
            t=np.array(ts), x=np.full(n, x0), y=np.full(n, y0),
            v=np.array(vs), psi=np.array(ps), vid=vid))
    if tracks:
        fc = predict_indirect(tracks, horizon=1, dt=dt, kernel=kernel)
        for vi, vid in enumerate(fc.ids):
            # integration starts from the anchor position we stuffed into
            # the track, so step 0 is already anchor-frame
            rows[int(vid)] = fc.steps[0, vi].copy()
    return rows


def prediction_chain(model: PredictorModel, history: list[Observation], *,
                     m_steps: int, dt: float,
                     kernel: Kernel | None = None,
                     use_gp: bool = True) -> list[Hypothesis]:
    """Roll the predictor forward ``m_steps`` observations.

    Each iteration feeds the latest ``n_history`` (real or predicted)
    observations back through the network; with ``use_gp`` the kinematic
    rows are replaced by GP extrapolation before re-entering the window.
    """
    cfg = model.config
    if len(history) < cfg.n_history:
        raise ValueError("history shorter than n_history")
    window = list(history[-cfg.n_history:])
    kern = kernel if kernel is not None else Kernel()
    offset = np.zeros(2)
    out: list[Hypothesis] = []
    ego_id = int(window[-1].k.ids[0])
    for step in range(1, m_steps + 1):
        pred = hpn_forward(model, window)
        if use_gp:
            anchor_rows = _gp_step_rows(window, dt, kern)
            ego_row = anchor_rows.get(ego_id)
            if ego_row is None:
                dx = dy = 0.0
            else:
                dx, dy = float(ego_row[0]), float(ego_row[1])
            shifted = {}
            for vid, row in anchor_rows.items():
                r = row.copy()
                r[0] -= dx
                r[1] -= dy
                shifted[vid] = r
            pred = hybrid_correct(pred, shifted)
            source = "hybrid"
        else:
            anchor = window[-1]
            v0, p0 = anchor.k.values[0, 2:]
            dx = float(v0 * dt * np.cos(p0))
            dy = float(v0 * dt * np.sin(p0))
            source = "ae"
        offset = offset + np.array([dx, dy])
        out.append(Hypothesis(obs=pred, step=step, source=source,
                              offset=offset.copy()))
        window.append(pred)
        window.pop(0)
    return out


# ---------------------------------------------------------------------------
# metrics and persistence

def pre_loss(pred: Observation, truth: Observation,
             k_stats: KStats | None = None) -> float:
    """Squared prediction error: summed over map cells plus standardized
    kinematics entries (each side masked by its own presence)."""
    stats = k_stats if k_stats is not None else KStats()
    d_vm = pred.vm.grid.astype(np.float64) - truth.vm.grid.astype(np.float64)
    zp = stats.apply(pred.k.values, pred.k.mask)
    zt = stats.apply(truth.k.values, truth.k.mask)
    return float(np.sum(d_vm * d_vm) + np.sum((zp - zt) ** 2))


def save_predictor(model: PredictorModel, path: str) -> None:
    meta = {"version": FORMAT_VERSION,
            "config": dataclasses.asdict(model.config)}
    np.savez(path,
             meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
             params=model.net.get_params(),
             k_mean=model.k_stats.mean, k_std=model.k_stats.std)


def load_predictor(path: str) -> PredictorModel:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != FORMAT_VERSION:
            raise ConfigurationError(
                f"unsupported predictor file version {meta.get('version')}")
        cfg_d = dict(meta["config"])
        cfg_d["conv_channels"] = tuple(cfg_d["conv_channels"])
        cfg = HpnConfig(**cfg_d)
        model = build_predictor(cfg, seed=0)
        model.net.set_params(np.asarray(data["params"], dtype=np.float64))
        model.k_stats = KStats(mean=np.asarray(data["k_mean"], dtype=np.float64),
                               std=np.asarray(data["k_std"], dtype=np.float64))
    return model
