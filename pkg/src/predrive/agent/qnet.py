"""Value network over stacked observations.

Input is the full state stack (N past observations, optionally M predicted
ones): velocity maps stacked along the channel axis feed a small conv trunk,
flattened kinematics rows feed an FC branch, and the concatenated features
map to one Q-value per meta-action. The same class serves the
prediction-free and prediction-aware agents; only ``n_frames`` differs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from predrive.actions import N_ACTIONS
from predrive.errors import ConfigurationError
from predrive.nn.layers import Conv2d, Linear, ReLU
from predrive.nn.net import ParamNet
from predrive.observe import StateStack


@dataclass(frozen=True)
class QNetConfig:
    grid_h: int = 16
    grid_w: int = 64
    n_frames: int = 4           # N, or N + M for the prediction-aware agent
    k_rows: int = 8
    conv_channels: tuple[int, ...] = (8, 16)
    fc_hidden: int = 128
    n_actions: int = N_ACTIONS
    # static scaling for kinematics columns (x, y, v, psi)
    k_scale: tuple[float, float, float, float] = (60.0, 8.0, 20.0, 1.0)

    def validate(self) -> None:
        if self.n_frames < 1:
            raise ConfigurationError("n_frames must be >= 1")
        h, w = self.grid_h, self.grid_w
        for _ in self.conv_channels:
            if h % 2 or w % 2:
                raise ConfigurationError(
                    "grid size must halve cleanly through the conv stack")
            h //= 2
            w //= 2

    @property
    def k_flat(self) -> int:
        return self.n_frames * self.k_rows * 4


class QNetwork(ParamNet):
    def __init__(self, cfg: QNetConfig, seed: int):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        sizes = [(cfg.grid_h, cfg.grid_w)]
        c_prev = cfg.n_frames
        for i, c in enumerate(cfg.conv_channels):
            conv = Conv2d(c_prev, c, k=3, stride=2, pad=1)
            self.add(f"conv{i}", conv)
            self.add(f"conv{i}_relu", ReLU())
            sizes.append(conv.out_hw(*sizes[-1]))
            c_prev = c
        flat = cfg.conv_channels[-1] * sizes[-1][0] * sizes[-1][1]
        self.add("vm_fc", Linear(flat, cfg.fc_hidden))
        self.add("vm_relu", ReLU())
        self.add("k_fc", Linear(cfg.k_flat, cfg.fc_hidden))
        self.add("k_relu", ReLU())
        self.add("joint_fc", Linear(2 * cfg.fc_hidden, cfg.fc_hidden))
        self.add("joint_relu", ReLU())
        self.add("out", Linear(cfg.fc_hidden, cfg.n_actions))
        self.finalize(seed)

    def forward(self, x: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
        """(vm (B, F, H, W), k (B, k_flat)) -> Q (B, n_actions)."""
        x_vm, x_k = x
        h = np.asarray(x_vm, dtype=np.float64)
        for i in range(len(self.cfg.conv_channels)):
            h = self._f(f"conv{i}", h)
            h = self._f(f"conv{i}_relu", h)
        self._conv_shape = h.shape
        h = self._f("vm_fc", h.reshape(h.shape[0], -1))
        h = self._f("vm_relu", h)
        k = self._f("k_fc", np.asarray(x_k, dtype=np.float64))
        k = self._f("k_relu", k)
        j = self._f("joint_fc", np.concatenate([h, k], axis=1))
        j = self._f("joint_relu", j)
        return self._f("out", j)

    def backward(self, d_q: np.ndarray) -> np.ndarray:
        self.begin_grad()
        d = self._b("out", d_q)
        d = self._b("joint_relu", d)
        d = self._b("joint_fc", d)
        nh = self.cfg.fc_hidden
        dh, dk = d[:, :nh], d[:, nh:]
        dk = self._b("k_relu", dk)
        self._b("k_fc", dk)
        dh = self._b("vm_relu", dh)
        dh = self._b("vm_fc", dh).reshape(self._conv_shape)
        for i in range(len(self.cfg.conv_channels) - 1, -1, -1):
            dh = self._b(f"conv{i}_relu", dh)
            dh = self._b(f"conv{i}", dh)
        return self.grad

    def clone(self) -> "QNetwork":
        twin = QNetwork(self.cfg, seed=0)
        twin.set_params(self.get_params())
        return twin


def encode_stack(stack: StateStack, cfg: QNetConfig) -> tuple[np.ndarray, np.ndarray]:
    """Pack a state stack into the network's input arrays.

    Velocity maps go to a float32 (F, H, W) block (replay-friendly);
    kinematics rows are statically scaled, masked, and flattened. Cells
    off the drivable road are painted -0.5 so lane position and road ends
    are visible to the network; predicted frames carry no road mask and
    stay vehicle-only.
    """
    frames = stack.all_obs()
    if len(frames) != cfg.n_frames:
        raise ValueError(
            f"stack has {len(frames)} frames, net expects {cfg.n_frames}")
    vm = np.empty((cfg.n_frames, cfg.grid_h, cfg.grid_w), dtype=np.float32)
    k = np.empty((cfg.n_frames, cfg.k_rows, 4))
    scale = np.asarray(cfg.k_scale)
    for i, obs in enumerate(frames):
        grid = obs.vm.grid
        if obs.road_mask is not None:
            grid = np.where(obs.road_mask, grid, np.float32(-0.5))
        vm[i] = grid
        k[i] = (obs.k.values / scale) * obs.k.mask[:, None]
    return vm, k.reshape(-1)
