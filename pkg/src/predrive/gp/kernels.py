"""Covariance functions for scalar time-series regression.

The default is the compound linear + RBF kernel: the linear part carries
trends (so extrapolation keeps a local slope instead of collapsing to the
prior mean) while the RBF part absorbs smooth local structure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from predrive.errors import ConfigurationError

KERNEL_KINDS = ("rbf", "linear", "sum")


@dataclass(frozen=True)
class Kernel:
    """Kernel hyperparameters.

    ``kind`` selects rbf, linear, or their sum. ``noise_variance`` is the
    observation noise added to the Gram diagonal at fit time.
    """

    kind: str = "sum"
    rbf_lengthscale: float = 1.0
    rbf_variance: float = 1.0
    linear_variance: float = 0.1
    noise_variance: float = 1e-4

    def validate(self) -> "Kernel":
        if self.kind not in KERNEL_KINDS:
            raise ConfigurationError(f"unknown kernel kind {self.kind!r}")
        if self.rbf_lengthscale <= 0:
            raise ConfigurationError("rbf_lengthscale must be > 0")
        for name in ("rbf_variance", "linear_variance", "noise_variance"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        return self

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Cross-covariance matrix K[i, j] = kappa(a[i], b[j])."""
        a = np.asarray(a, dtype=float).reshape(-1, 1)
        b = np.asarray(b, dtype=float).reshape(1, -1)
        out = np.zeros((a.shape[0], b.shape[1]))
        if self.kind in ("rbf", "sum"):
            sq = (a - b) ** 2
            out += self.rbf_variance * np.exp(-0.5 * sq / self.rbf_lengthscale ** 2)
        if self.kind in ("linear", "sum"):
            out += self.linear_variance * (a * b)
        return out

    def diag(self, a: np.ndarray) -> np.ndarray:
        """kappa(a[i], a[i]) without building the full matrix."""
        a = np.asarray(a, dtype=float).reshape(-1)
        out = np.zeros_like(a)
        if self.kind in ("rbf", "sum"):
            out += self.rbf_variance
        if self.kind in ("linear", "sum"):
            out += self.linear_variance * a * a
        return out
