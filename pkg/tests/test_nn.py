"""Network building-block tests.

The convolution kernels are checked three independent ways: against
scipy's correlation, via the adjoint inner-product identity, and (when the
compiled backend is present) compiled-vs-numpy parity. Layer backward
passes are checked against central finite differences.
"""
import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.signal import correlate2d

from helpers import numeric_grad, rel_err

from predrive.nn import _kernels_py, kernels
from predrive.nn.adam import Adam
from predrive.nn.layers import Conv2d, ConvTranspose2d, Linear, ReLU
from predrive.nn.net import ParamNet

RNG = np.random.default_rng(1234)


# ---------------------------------------------------------------------------
# kernel-level checks

def random_conv_case(seed, b=2, ci=3, co=4, h=9, w=11, k=3, stride=2, pad=1):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(b, ci, h, w))
    wgt = rng.normal(size=(co, ci, k, k))
    return x, wgt, stride, pad


class TestConvKernels:
    def test_forward_matches_scipy_correlation(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(5, 8))
        w = rng.normal(size=(3, 3))
        out = kernels.conv2d_forward(x[None, None], w[None, None],
                                     stride=1, pad=0)
        ref = correlate2d(x, w, mode="valid")
        np.testing.assert_allclose(out[0, 0], ref, atol=1e-10)

    def test_forward_matches_scipy_with_padding(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(6, 7))
        w = rng.normal(size=(3, 3))
        out = kernels.conv2d_forward(x[None, None], w[None, None],
                                     stride=1, pad=1)
        ref = correlate2d(np.pad(x, 1), w, mode="valid")
        np.testing.assert_allclose(out[0, 0], ref, atol=1e-10)

    def test_strided_forward_subsamples_the_dense_output(self):
        x, w, _, _ = random_conv_case(9)
        dense = kernels.conv2d_forward(x, w, stride=1, pad=1)
        strided = kernels.conv2d_forward(x, w, stride=2, pad=1)
        np.testing.assert_allclose(strided, dense[:, :, ::2, ::2], atol=1e-12)

    @pytest.mark.parametrize("seed,stride,pad", [(0, 1, 0), (1, 1, 1),
                                                 (2, 2, 1), (3, 3, 2)])
    def test_input_gradient_is_the_adjoint(self, seed, stride, pad):
        # <conv(x), g> == <x, conv^T(g)> for every x, g
        x, w, _, _ = random_conv_case(seed)
        y = kernels.conv2d_forward(x, w, stride, pad)
        g = np.random.default_rng(seed + 100).normal(size=y.shape)
        gx = kernels.conv2d_bwd_input(g, w, stride, pad,
                                      x.shape[2], x.shape[3])
        lhs = float(np.sum(y * g))
        rhs = float(np.sum(x * gx))
        assert rel_err(lhs, rhs) < 1e-10

    @pytest.mark.parametrize("seed,stride,pad", [(4, 1, 1), (5, 2, 1)])
    def test_weight_gradient_matches_finite_differences(self, seed, stride, pad):
        x, w, _, _ = random_conv_case(seed, b=1, ci=2, co=2, h=6, w=6)
        g = np.random.default_rng(seed + 50).normal(
            size=kernels.conv2d_forward(x, w, stride, pad).shape)
        dw = kernels.conv2d_bwd_weights(x, g, stride, pad, 3, 3)
        flat = w.ravel()
        for idx in np.random.default_rng(seed).choice(flat.size, 6,
                                                      replace=False):
            num = numeric_grad(
                lambda: float(np.sum(kernels.conv2d_forward(
                    x, flat.reshape(w.shape), stride, pad) * g)),
                flat, int(idx))
            assert rel_err(dw.ravel()[idx], num) < 1e-6

    @pytest.mark.skipif(kernels.BACKEND != "cython",
                        reason="compiled backend not importable")
    @pytest.mark.parametrize("seed,stride,pad,k", [(0, 1, 0, 3), (1, 1, 1, 3),
                                                   (2, 2, 1, 3), (3, 3, 2, 5)])
    def test_compiled_matches_numpy_backend(self, seed, stride, pad, k):
        from predrive.nn import _kernels_cy
        x, w, _, _ = random_conv_case(seed, k=k)
        yc = _kernels_cy.conv2d_forward(x, w, stride, pad)
        yn = _kernels_py.conv2d_forward(x, w, stride, pad)
        np.testing.assert_allclose(yc, yn, atol=1e-12)
        g = np.random.default_rng(seed + 10).normal(size=yn.shape)
        np.testing.assert_allclose(
            _kernels_cy.conv2d_bwd_input(g, w, stride, pad, 9, 11),
            _kernels_py.conv2d_bwd_input(g, w, stride, pad, 9, 11),
            atol=1e-12)
        np.testing.assert_allclose(
            _kernels_cy.conv2d_bwd_weights(x, g, stride, pad, k, k),
            _kernels_py.conv2d_bwd_weights(x, g, stride, pad, k, k),
            atol=1e-12)


class TestBackendSelection:
    def _probe(self, value):
        env = dict(os.environ, PREDRIVE_KERNELS=value)
        return subprocess.run(
            [sys.executable, "-c",
             "from predrive.nn import kernels; print(kernels.BACKEND)"],
            capture_output=True, text=True, env=env)

    def test_forced_numpy(self):
        out = self._probe("numpy")
        assert out.returncode == 0 and out.stdout.strip() == "numpy"

    def test_invalid_value_rejected(self):
        out = self._probe("bogus")
        assert out.returncode != 0
        assert "expected 'cython' or 'numpy'" in out.stderr


# ---------------------------------------------------------------------------
# layer-level gradient checks

def check_layer_gradients(layer, x, seed=0, n_slices=6, tol=1e-4):
    """Backward vs central differences on random parameter and input slots."""
    rng = np.random.default_rng(seed)
    p = layer.init_params(rng).astype(np.float64)
    y, _ = layer.forward(x, p)
    g = rng.normal(size=y.shape)

    def loss():
        return float(np.sum(layer.forward(x, p)[0] * g))

    y, cache = layer.forward(x, p)
    dx, dp = layer.backward(g, cache, p)
    if p.size:
        for idx in rng.choice(p.size, min(n_slices, p.size), replace=False):
            assert rel_err(dp[idx], numeric_grad(loss, p, int(idx))) < tol
    flat = x.reshape(-1)

    def loss_x():
        return float(np.sum(layer.forward(flat.reshape(x.shape), p)[0] * g))

    for idx in rng.choice(flat.size, n_slices, replace=False):
        assert rel_err(dx.reshape(-1)[idx],
                       numeric_grad(loss_x, flat, int(idx))) < tol


class TestLayerGradients:
    def test_linear(self):
        check_layer_gradients(Linear(7, 5), RNG.normal(size=(3, 7)))

    def test_conv(self):
        check_layer_gradients(Conv2d(3, 4, k=3, stride=2, pad=1),
                              RNG.normal(size=(2, 3, 8, 8)))

    def test_conv_transpose(self):
        check_layer_gradients(ConvTranspose2d(4, 3, (8, 8), k=3, stride=2,
                                              pad=1),
                              RNG.normal(size=(2, 4, 4, 4)))

    def test_relu(self):
        # parameter-free: the input gradient is the masked pass-through
        layer = ReLU()
        x = RNG.normal(size=(4, 6))
        y, cache = layer.forward(x, np.empty(0))
        g = RNG.normal(size=y.shape)
        dx, _ = layer.backward(g, cache, np.empty(0))
        np.testing.assert_array_equal(dx, g * (x > 0))

    def test_conv_transpose_mirrors_conv_geometry(self):
        conv = Conv2d(3, 6, k=3, stride=2, pad=1)
        assert conv.out_hw(16, 64) == (8, 32)
        up = ConvTranspose2d(6, 3, (16, 64), k=3, stride=2, pad=1)
        x = RNG.normal(size=(2, 6, 8, 32))
        y, _ = up.forward(x, up.init_params(np.random.default_rng(0)))
        assert y.shape == (2, 3, 16, 64)


# ---------------------------------------------------------------------------
# optimizer and parameter plumbing

class TestAdam:
    def test_first_step_is_signed_learning_rate(self):
        # bias correction makes m_hat = g and v_hat = g*g at t=1, so the
        # update is lr * g / (|g| + eps) ~ lr * sign(g)
        params = np.array([1.0, 2.0])
        opt = Adam(2, lr=0.01)
        opt.step(params, np.array([0.1, -0.2]))
        np.testing.assert_allclose(params, [0.99, 2.01], atol=1e-6)

    def test_state_roundtrip_resumes_identically(self):
        rng = np.random.default_rng(3)
        grads = [rng.normal(size=4) for _ in range(5)]
        a = Adam(4, lr=1e-2)
        pa = np.zeros(4)
        for g in grads[:2]:
            a.step(pa, g)
        b = Adam(4, lr=1e-2)
        pb = pa.copy()
        b.load_state(a.state())
        for g in grads[2:]:
            a.step(pa, g)
            b.step(pb, g)
        np.testing.assert_array_equal(pa, pb)


class MiniNet(ParamNet):
    def __init__(self, seed=0):
        super().__init__()
        self.add("fc1", Linear(4, 6))
        self.add("act", ReLU())
        self.add("fc2", Linear(6, 2))
        self.finalize(seed)

    def forward(self, x):
        h = self._f("fc1", x)
        h = self._f("act", h)
        return self._f("fc2", h)

    def backward(self, dy):
        self.begin_grad()
        d = self._b("fc2", dy)
        d = self._b("act", d)
        self._b("fc1", d)
        return self.grad


class TestParamNet:
    def test_duplicate_layer_name_rejected(self):
        net = ParamNet()
        net.add("fc", Linear(2, 2))
        with pytest.raises(ValueError):
            net.add("fc", Linear(2, 2))

    def test_param_roundtrip_and_shape_check(self):
        net = MiniNet(seed=5)
        vec = net.get_params()
        net.set_params(np.zeros_like(vec))
        assert not net.params.any()
        net.set_params(vec)
        np.testing.assert_array_equal(net.get_params(), vec)
        with pytest.raises(ValueError):
            net.set_params(np.zeros(3))

    def test_init_is_seed_deterministic(self):
        np.testing.assert_array_equal(MiniNet(seed=9).get_params(),
                                      MiniNet(seed=9).get_params())
        assert not np.array_equal(MiniNet(seed=9).get_params(),
                                  MiniNet(seed=10).get_params())

    def test_composite_gradient(self):
        net = MiniNet(seed=2)
        x = RNG.normal(size=(3, 4))
        g = RNG.normal(size=(3, 2))

        def loss():
            return float(np.sum(net.forward(x) * g))

        net.forward(x)
        grad = net.backward(g)
        rng = np.random.default_rng(0)
        for idx in rng.choice(net.n_params, 8, replace=False):
            assert rel_err(grad[idx],
                           numeric_grad(loss, net.params, int(idx))) < 1e-4
