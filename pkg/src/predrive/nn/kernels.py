"""Backend selection for the convolution hot loops.

The compiled extension is preferred when importable; the numpy implementation
is the always-available fallback. ``PREDRIVE_KERNELS`` forces a choice:
``cython`` (raise if the extension is missing) or ``numpy``.
"""
from __future__ import annotations

import os

from . import _kernels_py

_FORCED = os.environ.get("PREDRIVE_KERNELS", "").strip().lower()

if _FORCED == "numpy":
    _impl = _kernels_py
    BACKEND = "numpy"
elif _FORCED == "cython":
    from . import _kernels_cy as _impl  # type: ignore[no-redef]

    BACKEND = "cython"
elif _FORCED:
    raise ValueError(
        f"PREDRIVE_KERNELS={_FORCED!r}: expected 'cython' or 'numpy'"
    )
else:
    try:
        from . import _kernels_cy as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "numpy"

conv2d_forward = _impl.conv2d_forward
conv2d_bwd_input = _impl.conv2d_bwd_input
conv2d_bwd_weights = _impl.conv2d_bwd_weights
