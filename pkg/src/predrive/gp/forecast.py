"""Kinematic forecasting baselines over vehicle state histories.

The indirect GP scheme regresses speed and heading as two independent time
series and integrates position from the posterior means (trapezoidal rule on a
sub-step grid). The direct scheme regresses x and y positions separately and
recovers speed/heading by finite differences. Constant-speed and
constant-acceleration extrapolation complete the classical baselines.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from predrive.errors import NumericalError
from predrive.gp.kernels import Kernel
from predrive.gp.regression import gp_fit, gp_fit_optimized, gp_predict

METHODS = ("gp_indirect", "gp_direct", "cs", "ca",
           "learned_direct", "learned_indirect", "hybrid")

# Sub-intervals per forecast step for the position quadrature.
N_QUAD = 4


@dataclass
class VehicleTrack:
    """History samples for one vehicle: aligned arrays over observation times."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    psi: np.ndarray
    vid: int = 0

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        for name in ("x", "y", "v", "psi"):
            setattr(self, name,
                    np.asarray(getattr(self, name), dtype=float).reshape(-1))


@dataclass
class KinematicForecast:
    """Per-step per-vehicle forecast: steps[k, i] = (x, y, v, psi) of vehicle
    ``ids[i]`` at horizon step k+1."""

    steps: np.ndarray           # (M, n_vehicles, 4)
    ids: np.ndarray             # (n_vehicles,)
    method: str
    dt: float
    fallback: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return self.steps.shape[0]

    def positions(self) -> np.ndarray:
        return self.steps[:, :, :2]

    def vehicle(self, vid: int) -> np.ndarray:
        idx = int(np.nonzero(self.ids == vid)[0][0])
        return self.steps[:, idx, :]


def _as_tracks(tracks) -> list[VehicleTrack]:
    return [tracks] if isinstance(tracks, VehicleTrack) else list(tracks)


def _pack(per_vehicle: list[np.ndarray], tracks: list[VehicleTrack],
          method: str, dt: float, fallback: bool = False) -> KinematicForecast:
    steps = np.stack(per_vehicle, axis=1)
    ids = np.array([trk.vid for trk in tracks], dtype=np.int64)
    return KinematicForecast(steps=steps, ids=ids, method=method, dt=dt,
                             fallback=fallback)


def _cs_one(trk: VehicleTrack, horizon: int, dt: float) -> np.ndarray:
    v, psi = trk.v[-1], trk.psi[-1]
    k = np.arange(1, horizon + 1)
    out = np.empty((horizon, 4))
    out[:, 0] = trk.x[-1] + k * dt * v * np.cos(psi)
    out[:, 1] = trk.y[-1] + k * dt * v * np.sin(psi)
    out[:, 2] = v
    out[:, 3] = psi
    return out


def predict_cs(tracks, horizon: int, dt: float) -> KinematicForecast:
    """Hold the last speed and heading constant."""
    tracks = _as_tracks(tracks)
    if any(len(trk.t) < 1 for trk in tracks):
        raise ValueError("constant-speed prediction needs >= 1 sample")
    return _pack([_cs_one(trk, horizon, dt) for trk in tracks],
                 tracks, "cs", dt)


def predict_ca(tracks, horizon: int, dt: float) -> KinematicForecast:
    """Hold the last finite-difference acceleration; speed clamps at zero."""
    tracks = _as_tracks(tracks)
    if any(len(trk.t) < 2 for trk in tracks):
        raise ValueError("constant-acceleration prediction needs >= 2 samples")
    per_vehicle = []
    for trk in tracks:
        accel = (trk.v[-1] - trk.v[-2]) / (trk.t[-1] - trk.t[-2])
        x, y, v, psi = trk.x[-1], trk.y[-1], trk.v[-1], trk.psi[-1]
        out = np.empty((horizon, 4))
        for k in range(horizon):
            v_next = max(0.0, v + accel * dt)
            x += 0.5 * (v + v_next) * np.cos(psi) * dt
            y += 0.5 * (v + v_next) * np.sin(psi) * dt
            v = v_next
            out[k] = (x, y, v, psi)
        per_vehicle.append(out)
    return _pack(per_vehicle, tracks, "ca", dt)


def _fit(t_rel: np.ndarray, y: np.ndarray, kernel: Kernel, optimize: bool):
    if optimize:
        return gp_fit_optimized(t_rel, y, kernel)
    return gp_fit(t_rel, y, kernel)


def _indirect_one(trk: VehicleTrack, horizon: int, dt: float,
                  kernel: Kernel, optimize: bool) -> np.ndarray:
    # relative time keeps the linear kernel anchored at the last observation
    t0 = trk.t[-1]
    t_rel = trk.t - t0
    v_model = _fit(t_rel, trk.v, kernel, optimize)
    psi_model = _fit(t_rel, np.unwrap(trk.psi), kernel, optimize)

    fine = np.linspace(0.0, horizon * dt, horizon * N_QUAD + 1)
    v_mean, _ = gp_predict(v_model, fine)
    psi_mean, _ = gp_predict(psi_model, fine)
    v_mean = np.maximum(v_mean, 0.0)

    dx = v_mean * np.cos(psi_mean)
    dy = v_mean * np.sin(psi_mean)
    h = fine[1] - fine[0]
    x_path = trk.x[-1] + np.concatenate(
        ([0.0], np.cumsum(0.5 * (dx[1:] + dx[:-1]) * h)))
    y_path = trk.y[-1] + np.concatenate(
        ([0.0], np.cumsum(0.5 * (dy[1:] + dy[:-1]) * h)))

    idx = np.arange(1, horizon + 1) * N_QUAD
    out = np.empty((horizon, 4))
    out[:, 0] = x_path[idx]
    out[:, 1] = y_path[idx]
    out[:, 2] = v_mean[idx]
    out[:, 3] = psi_mean[idx]
    return out


def predict_indirect(tracks, horizon: int, dt: float,
                     kernel: Kernel | None = None,
                     optimize: bool = False) -> KinematicForecast:
    """GP regression of speed and heading, position by quadrature.

    ``optimize`` selects hyperparameters per series by marginal likelihood
    instead of using the fixed kernel. Falls back to constant speed
    (tagged) if a fit fails.
    """
    tracks = _as_tracks(tracks)
    if any(len(trk.t) < 2 for trk in tracks):
        raise ValueError("indirect prediction needs >= 2 samples")
    kernel = kernel or Kernel()
    per_vehicle, fallback = [], False
    for trk in tracks:
        try:
            per_vehicle.append(_indirect_one(trk, horizon, dt, kernel,
                                             optimize))
        except NumericalError:
            per_vehicle.append(_cs_one(trk, horizon, dt))
            fallback = True
    return _pack(per_vehicle, tracks, "gp_indirect", dt, fallback=fallback)


def predict_direct(tracks, horizon: int, dt: float,
                   kernel: Kernel | None = None,
                   optimize: bool = False) -> KinematicForecast:
    """Two independent GPs on x and y; speed/heading by finite differences."""
    tracks = _as_tracks(tracks)
    if any(len(trk.t) < 2 for trk in tracks):
        raise ValueError("direct prediction needs >= 2 samples")
    kernel = kernel or Kernel()
    per_vehicle, fallback = [], False
    t_query = np.arange(1, horizon + 1) * dt
    for trk in tracks:
        t_rel = trk.t - trk.t[-1]
        try:
            x_mean, _ = gp_predict(_fit(t_rel, trk.x, kernel, optimize), t_query)
            y_mean, _ = gp_predict(_fit(t_rel, trk.y, kernel, optimize), t_query)
        except NumericalError:
            per_vehicle.append(_cs_one(trk, horizon, dt))
            fallback = True
            continue
        prev = np.array([trk.x[-1], trk.y[-1]])
        out = np.empty((horizon, 4))
        for k in range(horizon):
            cur = np.array([x_mean[k], y_mean[k]])
            step = cur - prev
            out[k, 0], out[k, 1] = cur
            out[k, 2] = np.hypot(*step) / dt
            out[k, 3] = np.arctan2(step[1], step[0]) if np.hypot(*step) > 1e-12 \
                else trk.psi[-1]
            prev = cur
        per_vehicle.append(out)
    return _pack(per_vehicle, tracks, "gp_direct", dt, fallback=fallback)


def position_error(forecast: KinematicForecast, truth) -> float:
    """Mean Euclidean displacement error over the horizon and vehicles.

    ``truth`` is another forecast (same horizon/vehicle layout) or an
    (M, n_vehicles, 2) position array.
    """
    pred = forecast.positions()
    true_pos = truth.positions() if isinstance(truth, KinematicForecast) \
        else np.asarray(truth, dtype=float)
    if true_pos.shape != pred.shape:
        raise ValueError(
            f"horizon mismatch: forecast {pred.shape} vs truth {true_pos.shape}")
    return float(np.mean(np.linalg.norm(pred - true_pos, axis=-1)))
