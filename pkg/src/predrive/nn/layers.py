"""Network building blocks with hand-written backward passes.

Every layer exposes the same small surface: ``n_params``, ``init_params(rng)``
returning a flat float64 slice, ``forward(x, p) -> (y, cache)`` and
``backward(dy, cache, p) -> (dx, dp)``. Parameters always live in a flat
vector owned by the enclosing net, so layers only ever see their own slice.

ConvTranspose2d is the exact adjoint of Conv2d: its forward is the
input-gradient kernel and its input-gradient is the forward kernel, which
keeps the transposed output size explicit instead of relying on output
padding conventions.
"""
from __future__ import annotations

import numpy as np

from . import kernels


class Linear:
    """Affine map ``y = x @ W.T + b`` over the last axis."""

    def __init__(self, n_in: int, n_out: int):
        self.n_in = int(n_in)
        self.n_out = int(n_out)
        self.n_params = self.n_in * self.n_out + self.n_out

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        scale = np.sqrt(2.0 / self.n_in)
        w = rng.normal(0.0, scale, size=self.n_in * self.n_out)
        return np.concatenate([w, np.zeros(self.n_out)])

    def _unpack(self, p: np.ndarray):
        nw = self.n_in * self.n_out
        return p[:nw].reshape(self.n_out, self.n_in), p[nw:]

    def forward(self, x: np.ndarray, p: np.ndarray):
        w, b = self._unpack(p)
        return x @ w.T + b, x

    def backward(self, dy: np.ndarray, cache: np.ndarray, p: np.ndarray):
        x = cache
        w, _ = self._unpack(p)
        dw = dy.T @ x
        db = dy.sum(axis=0)
        dx = dy @ w
        return dx, np.concatenate([dw.ravel(), db])


class Conv2d:
    """2-D convolution (cross-correlation) with square kernel and bias."""

    def __init__(self, c_in: int, c_out: int, k: int = 3, stride: int = 1,
                 pad: int = 1):
        self.c_in = int(c_in)
        self.c_out = int(c_out)
        self.k = int(k)
        self.stride = int(stride)
        self.pad = int(pad)
        self.n_weights = c_out * c_in * k * k
        self.n_params = self.n_weights + c_out

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        k, s, p = self.k, self.stride, self.pad
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        fan_in = self.c_in * self.k * self.k
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=self.n_weights)
        return np.concatenate([w, np.zeros(self.c_out)])

    def _unpack(self, p: np.ndarray):
        w = p[:self.n_weights].reshape(self.c_out, self.c_in, self.k, self.k)
        return w, p[self.n_weights:]

    def forward(self, x: np.ndarray, p: np.ndarray):
        w, b = self._unpack(p)
        y = kernels.conv2d_forward(x, w, self.stride, self.pad)
        y += b[None, :, None, None]
        return y, x

    def backward(self, dy: np.ndarray, cache: np.ndarray, p: np.ndarray):
        x = cache
        w, _ = self._unpack(p)
        dw = kernels.conv2d_bwd_weights(x, dy, self.stride, self.pad,
                                        self.k, self.k)
        db = dy.sum(axis=(0, 2, 3))
        dx = kernels.conv2d_bwd_input(dy, w, self.stride, self.pad,
                                      x.shape[2], x.shape[3])
        return dx, np.concatenate([dw.ravel(), db])


class ConvTranspose2d:
    """Transposed convolution realized as the adjoint of Conv2d.

    ``out_hw`` is given explicitly (the input size of the mirrored Conv2d),
    so strided upsampling reproduces the encoder geometry exactly.
    """

    def __init__(self, c_in: int, c_out: int, out_hw: tuple[int, int],
                 k: int = 3, stride: int = 1, pad: int = 1):
        self.c_in = int(c_in)
        self.c_out = int(c_out)
        self.out_h, self.out_w = int(out_hw[0]), int(out_hw[1])
        self.k = int(k)
        self.stride = int(stride)
        self.pad = int(pad)
        # weight laid out as the underlying conv's (c_in, c_out, k, k)
        self.n_weights = c_in * c_out * k * k
        self.n_params = self.n_weights + c_out

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        fan_in = self.c_in * self.k * self.k
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=self.n_weights)
        return np.concatenate([w, np.zeros(self.c_out)])

    def _unpack(self, p: np.ndarray):
        w = p[:self.n_weights].reshape(self.c_in, self.c_out, self.k, self.k)
        return w, p[self.n_weights:]

    def forward(self, x: np.ndarray, p: np.ndarray):
        w, b = self._unpack(p)
        y = kernels.conv2d_bwd_input(x, w, self.stride, self.pad,
                                     self.out_h, self.out_w)
        y += b[None, :, None, None]
        return y, x

    def backward(self, dy: np.ndarray, cache: np.ndarray, p: np.ndarray):
        x = cache
        w, _ = self._unpack(p)
        dx = kernels.conv2d_forward(dy, w, self.stride, self.pad)
        dw = kernels.conv2d_bwd_weights(dy, x, self.stride, self.pad,
                                        self.k, self.k)
        db = dy.sum(axis=(0, 2, 3))
        return dx, np.concatenate([dw.ravel(), db])


class ReLU:
    n_params = 0

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        return np.empty(0)

    def forward(self, x: np.ndarray, p: np.ndarray):
        y = np.maximum(x, 0.0)
        return y, x > 0.0

    def backward(self, dy: np.ndarray, cache: np.ndarray, p: np.ndarray):
        return dy * cache, np.empty(0)
