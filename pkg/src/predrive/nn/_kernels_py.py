"""Pure-numpy convolution kernels (fallback backend).

Forward and weight-gradient use sliding windows + einsum (BLAS-backed);
input-gradient accumulates per filter tap to avoid a full scatter.
Shapes follow the usual (batch, channels, height, width) layout with weights
(filters, channels, kh, kw). All arrays are float64 C-contiguous.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]  # (B, C, Ho, Wo, kh, kw)


def conv2d_forward(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    win = _windows(x, w.shape[2], w.shape[3], stride, pad)
    y = np.einsum("bcijuv,fcuv->bfij", win, w, optimize=True)
    return np.ascontiguousarray(y)


def conv2d_bwd_weights(x: np.ndarray, dy: np.ndarray, stride: int, pad: int,
                       kh: int, kw: int) -> np.ndarray:
    win = _windows(x, kh, kw, stride, pad)
    dw = np.einsum("bcijuv,bfij->fcuv", win, dy, optimize=True)
    return np.ascontiguousarray(dw)


def conv2d_bwd_input(dy: np.ndarray, w: np.ndarray, stride: int, pad: int,
                     h_in: int, w_in: int) -> np.ndarray:
    b, _, ho, wo = dy.shape
    _, c, kh, kw = w.shape
    g = np.einsum("bfij,fcuv->bcuvij", dy, w, optimize=True)
    dxp = np.zeros((b, c, h_in + 2 * pad, w_in + 2 * pad))
    for u in range(kh):
        for v in range(kw):
            dxp[:, :, u:u + ho * stride:stride,
                v:v + wo * stride:stride] += g[:, :, u, v]
    if pad:
        return np.ascontiguousarray(dxp[:, :, pad:pad + h_in, pad:pad + w_in])
    return dxp
