"""Gaussian-process regression and kinematic forecasting baselines."""
from predrive.gp.forecast import (
    KinematicForecast,
    VehicleTrack,
    position_error,
    predict_ca,
    predict_cs,
    predict_direct,
    predict_indirect,
)
from predrive.gp.kernels import Kernel
from predrive.gp.regression import GpModel, gp_fit, gp_fit_optimized, gp_predict

__all__ = [
    "Kernel", "GpModel", "gp_fit", "gp_fit_optimized", "gp_predict",
    "KinematicForecast", "VehicleTrack", "position_error",
    "predict_ca", "predict_cs", "predict_direct", "predict_indirect",
]
