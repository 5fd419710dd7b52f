"""Small shared test utilities: hand-built worlds and gradient checking."""
from __future__ import annotations

import numpy as np

from predrive.sim.params import params_for
from predrive.sim.road import Road, RoadSpec, default_spec
from predrive.sim.vehicle import VehicleState
from predrive.sim.world import World


def hv(vid, x, lane=0, v=20.0, behavior="moderate", psi=0.0, y=None):
    yy = lane * 4.0 if y is None else y
    return VehicleState(id=vid, x=x, y=yy, v=v, psi=psi, lane=lane,
                        kind="HV", behavior=behavior)


def av(vid, x, lane=0, v=20.0, psi=0.0, y=None):
    yy = lane * 4.0 if y is None else y
    return VehicleState(id=vid, x=x, y=yy, v=v, psi=psi, lane=lane, kind="AV")


def build_world(vehicles, spec: RoadSpec | None = None, seed: int = 0) -> World:
    """World with explicit vehicle states on a plain highway by default."""
    road = Road(spec if spec is not None else default_spec("highway"))
    hv_params = {v.id: params_for(v.behavior or "moderate")
                 for v in vehicles if v.kind == "HV"}
    return World(road=road, vehicles=list(vehicles), hv_params=hv_params,
                 seed=seed)


def numeric_grad(loss_fn, params: np.ndarray, idx: int,
                 eps: float = 1e-6) -> float:
    """Central difference of a scalar loss with respect to params[idx]."""
    old = params[idx]
    params[idx] = old + eps
    lp = loss_fn()
    params[idx] = old - eps
    lm = loss_fn()
    params[idx] = old
    return (lp - lm) / (2.0 * eps)


def rel_err(a: float, b: float, floor: float = 1e-6) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)
