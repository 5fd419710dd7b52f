"""Gaussian-process regression over a scalar time series.

A fitted model stores the Cholesky factor of the noisy Gram matrix and a
constant prior mean (the training mean by default). Posterior queries use
triangular solves; the factorization escalates diagonal jitter from 1e-10 to
1e-6 before giving up. Because the prediction chain refits on the same
uniformly spaced time grid over and over, Cholesky factors are memoized on
(kernel, time grid).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from predrive.errors import NumericalError
from predrive.gp.kernels import Kernel

_JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


@dataclass
class GpModel:
    kernel: Kernel
    train_t: np.ndarray
    train_y: np.ndarray
    mean: float
    chol: np.ndarray        # lower Cholesky factor of K + noise*I (+ jitter)
    alpha: np.ndarray       # (K + noise*I)^-1 (y - mean)

    def log_marginal_likelihood(self) -> float:
        resid = self.train_y - self.mean
        m = len(self.train_y)
        return float(-0.5 * resid @ self.alpha
                     - np.sum(np.log(np.diag(self.chol)))
                     - 0.5 * m * np.log(2.0 * np.pi))


@lru_cache(maxsize=128)
def _factor_cached(kernel: Kernel, t_key: tuple) -> np.ndarray:
    t = np.asarray(t_key, dtype=float)
    gram = kernel(t, t)
    noisy = gram + kernel.noise_variance * np.eye(len(t))
    for jitter in _JITTERS:
        try:
            return np.linalg.cholesky(noisy + jitter * np.eye(len(t)))
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(
        "Gram matrix not positive definite after jitter escalation")


def gp_fit(t: np.ndarray, y: np.ndarray, kernel: Kernel | None = None) -> GpModel:
    """Fit a GP to observations ``y`` at strictly increasing times ``t``."""
    kernel = (kernel or Kernel()).validate()
    t = np.asarray(t, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(t) < 2:
        raise ValueError("gp_fit needs at least 2 observations")
    if len(t) != len(y):
        raise ValueError("t and y must have equal length")
    if not np.all(np.diff(t) > 0):
        raise ValueError("timestamps must be strictly increasing")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise ValueError("gp_fit requires finite inputs")

    chol = _factor_cached(kernel, tuple(t.tolist()))
    mean = float(np.mean(y))
    alpha = cho_solve((chol, True), y - mean)
    return GpModel(kernel=kernel, train_t=t, train_y=y, mean=mean,
                   chol=chol, alpha=alpha)


def gp_predict(model: GpModel, t_star: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and (latent) variance at query times.

    Variance is clamped at zero to absorb rounding.
    """
    t_star = np.atleast_1d(np.asarray(t_star, dtype=float))
    k_star = model.kernel(t_star, model.train_t)          # (n*, m)
    mean = model.mean + k_star @ model.alpha
    v = solve_triangular(model.chol, k_star.T, lower=True)
    var = model.kernel.diag(t_star) - np.sum(v * v, axis=0)
    return mean, np.maximum(var, 0.0)


# Grid-search candidates for optional hyperparameter selection (5 x 5 x 3).
# Lengthscale and linear variance govern how trends extrapolate beyond the
# short history; the noise axis lets the likelihood discount measurement
# jitter instead of interpolating it.  Variance-type candidates are
# expressed relative to the sample variance of the centered series
# (equivalent to standardizing y first), so one grid serves channels whose
# natural scales differ by orders of magnitude (position vs heading).  The
# noise axis reaches 1.0 = "the series is indistinguishable from noise",
# which collapses the posterior to the history mean.
# Lengthscales start at the history span: shorter scales let the RBF
# decouple adjacent samples (absorbing noise point-by-point) and then decay
# to the prior immediately past the newest observation, which destroys
# trend extrapolation.
_LENGTHSCALES = np.geomspace(1.5, 6.0, 5)
_LINEAR_VARS = np.geomspace(0.05, 2.0, 5)
_NOISE_VARS = (1e-2, 1e-1, 1.0)


def gp_fit_optimized(t: np.ndarray, y: np.ndarray,
                     base: Kernel | None = None) -> GpModel:
    """Fit with log-marginal-likelihood maximization over a fixed grid.

    Deterministic: ties resolve to the first candidate in grid order.
    """
    base = (base or Kernel()).validate()
    sv = max(float(np.var(np.asarray(y, dtype=float))), 1e-8)
    best_model, best_lml = None, -np.inf
    for ls in _LENGTHSCALES:
        for lv in _LINEAR_VARS:
            for nv in _NOISE_VARS:
                kernel = Kernel(kind=base.kind, rbf_lengthscale=float(ls),
                                rbf_variance=base.rbf_variance * sv,
                                linear_variance=float(lv * sv),
                                noise_variance=float(nv * sv))
                try:
                    model = gp_fit(t, y, kernel)
                except NumericalError:
                    continue
                lml = model.log_marginal_likelihood()
                if lml > best_lml:
                    best_model, best_lml = model, lml
    if best_model is None:
        raise NumericalError("no kernel in the grid produced a stable fit")
    return best_model
