"""Flat-parameter network base.

All weights of a net live in one contiguous float64 vector; each named layer
owns a slice of it. That makes optimizer state trivial (one Adam over one
vector), serialization a single array, and finite-difference checks a matter
of poking vector entries.

Subclasses register layers in ``__init__`` via :meth:`add`, call
:meth:`finalize` once, and express forward/backward with the ``_f``/``_b``
helpers, which thread caches and accumulate per-layer gradients into a flat
gradient buffer.
"""
from __future__ import annotations

import numpy as np


class ParamNet:
    def __init__(self) -> None:
        self._layers: dict[str, object] = {}
        self._order: list[str] = []
        self.index: dict[str, slice] = {}
        self.params: np.ndarray | None = None
        self._cache: dict[str, object] = {}
        self._grad: np.ndarray | None = None

    def add(self, name: str, layer) -> None:
        if name in self._layers:
            raise ValueError(f"duplicate layer name {name!r}")
        self._layers[name] = layer
        self._order.append(name)

    def finalize(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        offset = 0
        chunks = []
        for name in self._order:
            layer = self._layers[name]
            self.index[name] = slice(offset, offset + layer.n_params)
            chunks.append(np.asarray(layer.init_params(rng), dtype=np.float64))
            offset += layer.n_params
        self.params = np.concatenate(chunks) if chunks else np.empty(0)

    @property
    def n_params(self) -> int:
        assert self.params is not None
        return self.params.size

    def layer(self, name: str):
        return self._layers[name]

    def p(self, name: str) -> np.ndarray:
        assert self.params is not None
        return self.params[self.index[name]]

    def get_params(self) -> np.ndarray:
        assert self.params is not None
        return self.params.copy()

    def set_params(self, values: np.ndarray) -> None:
        assert self.params is not None
        if values.shape != self.params.shape:
            raise ValueError("parameter vector shape mismatch")
        self.params[:] = values

    # -- forward/backward plumbing ------------------------------------
    def begin_grad(self) -> None:
        self._grad = np.zeros_like(self.params)

    @property
    def grad(self) -> np.ndarray:
        assert self._grad is not None
        return self._grad

    def _f(self, name: str, x: np.ndarray) -> np.ndarray:
        y, cache = self._layers[name].forward(x, self.p(name))
        self._cache[name] = cache
        return y

    def _b(self, name: str, dy: np.ndarray) -> np.ndarray:
        dx, dp = self._layers[name].backward(dy, self._cache[name],
                                             self.p(name))
        if dp.size:
            self._grad[self.index[name]] += dp
        return dx
