"""Observation-predictor tests: shapes, training, correction, chaining."""
import json

import numpy as np
import pytest

from helpers import numeric_grad, rel_err

from predrive.errors import ConfigurationError
from predrive.hpn import (HpnConfig, HpnSample, KStats, build_hpn_samples,
                          build_predictor, fit_k_stats, hpn_forward,
                          hpn_train, hybrid_correct, load_predictor, pre_loss,
                          prediction_chain, save_predictor)
from predrive.observe import KinematicsMatrix, Observation, ObservationConfig, VelocityMap

SMALL = HpnConfig(grid_h=8, grid_w=16, n_history=3, k_rows=4,
                  conv_channels=(4, 8), latent=16, fc_hidden=24)
OBS_CFG = ObservationConfig(grid_h=8, grid_w=16, max_vehicles=4)


def mk_obs(t, rows, grid=None, seed=0):
    """Observation with explicit kinematics rows [(vid, x, y, v, psi), ...]."""
    if grid is None:
        rng = np.random.default_rng(seed)
        grid = rng.uniform(0.0, 1.0, (8, 16)).astype(np.float32)
    values = np.zeros((4, 4))
    mask = np.zeros(4, dtype=bool)
    ids = np.full(4, -1, dtype=np.int64)
    for i, (vid, x, y, v, psi) in enumerate(rows):
        values[i] = (x, y, v, psi)
        mask[i] = True
        ids[i] = vid
    k = KinematicsMatrix(values=values, mask=mask, ids=ids)
    return Observation(vm=VelocityMap(grid=grid, config=OBS_CFG), k=k, t=t)


def blob_episode(n=26, seed=0):
    """Synthetic ego sequence: a bright blob drifting right, one neighbor
    closing in linearly. Learnable one-step structure for training tests."""
    rng = np.random.default_rng(seed)
    out = []
    for t in range(n):
        grid = np.zeros((8, 16), dtype=np.float32)
        c = 2 + (t % 12)
        grid[3:5, c:c + 3] = 0.8
        grid[:, :] += rng.uniform(0, 0.02, (8, 16)).astype(np.float32)
        rows = [(0, 0.0, 0.0, 12.0, 0.0),
                (5, 20.0 - 0.5 * t, 1.0, 10.0, 0.0)]
        out.append(mk_obs(t, rows, grid=np.clip(grid, 0, 1)))
    return out


class TestForward:
    def test_shapes_dtype_and_range(self):
        model = build_predictor(SMALL, seed=0)
        hist = blob_episode(3)
        pred = hpn_forward(model, hist)
        assert pred.vm.grid.shape == (8, 16)
        assert pred.vm.grid.dtype == np.float32
        assert pred.vm.grid.min() >= 0.0 and pred.vm.grid.max() <= 1.0
        assert pred.k.values.shape == (4, 4)
        assert pred.t == hist[-1].t + 1

    def test_ids_mask_inherited_and_absent_rows_zeroed(self):
        model = build_predictor(SMALL, seed=0)
        hist = blob_episode(3)
        pred = hpn_forward(model, hist)
        np.testing.assert_array_equal(pred.k.ids, hist[-1].k.ids)
        np.testing.assert_array_equal(pred.k.mask, hist[-1].k.mask)
        assert not pred.k.values[~pred.k.mask].any()

    def test_deterministic(self):
        hist = blob_episode(3)
        a = hpn_forward(build_predictor(SMALL, seed=3), hist)
        b = hpn_forward(build_predictor(SMALL, seed=3), hist)
        np.testing.assert_array_equal(a.vm.grid, b.vm.grid)
        np.testing.assert_array_equal(a.k.values, b.k.values)

    def test_wrong_history_length_rejected(self):
        model = build_predictor(SMALL, seed=0)
        with pytest.raises(ValueError):
            hpn_forward(model, blob_episode(5))


class TestSamplesAndStats:
    def test_sliding_windows(self):
        ep = blob_episode(10)
        samples = build_hpn_samples(ep, n_history=3)
        assert len(samples) == 7
        assert samples[0].history == tuple(ep[0:3])
        assert samples[0].target is ep[3]
        assert samples[-1].target is ep[-1]

    def test_k_stats_use_masked_rows_only(self):
        rows = [(0, 0.0, 0.0, 10.0, 0.0)]
        ep = [mk_obs(t, rows) for t in range(4)]
        samples = build_hpn_samples(ep, n_history=3)
        stats = fit_k_stats(samples)
        np.testing.assert_allclose(stats.mean, [0.0, 0.0, 10.0, 0.0])
        # constant columns floor the scale instead of dividing by zero
        assert (stats.std >= 1e-6).all()

    def test_apply_invert_roundtrip(self):
        stats = KStats(mean=np.array([1.0, -2.0, 5.0, 0.1]),
                       std=np.array([2.0, 1.0, 4.0, 0.5]))
        vals = np.array([[3.0, -1.0, 9.0, 0.6], [0.0, 0.0, 0.0, 0.0]])
        mask = np.array([True, True])
        z = stats.apply(vals, mask)
        np.testing.assert_allclose(stats.invert(z), vals, atol=1e-12)
        np.testing.assert_allclose(z[0], [1.0, 1.0, 1.0, 1.0])


class TestTraining:
    def test_loss_descends_on_structured_data(self):
        model = build_predictor(SMALL, seed=0)
        samples = build_hpn_samples(blob_episode(26), n_history=3)
        losses = hpn_train(model, samples, epochs=8, batch_size=8,
                           lr=1e-3, seed=0)
        assert len(losses) == 8
        assert all(np.isfinite(l) for l in losses)
        assert losses[-1] < 0.7 * losses[0]

    def test_training_is_seed_deterministic(self):
        samples = build_hpn_samples(blob_episode(14), n_history=3)
        runs = []
        for _ in range(2):
            model = build_predictor(SMALL, seed=1)
            runs.append(hpn_train(model, samples, epochs=2, batch_size=8,
                                  lr=1e-3, seed=5))
        assert runs[0] == runs[1]

    def test_freeze_stats_keeps_existing_scaling(self):
        model = build_predictor(SMALL, seed=0)
        frozen = KStats(mean=np.array([0.0, 0.0, 11.0, 0.0]),
                        std=np.array([5.0, 1.0, 2.0, 0.2]))
        model.k_stats = frozen
        samples = build_hpn_samples(blob_episode(12), n_history=3)
        hpn_train(model, samples, epochs=1, batch_size=8, freeze_stats=True)
        assert model.k_stats is frozen

    def test_empty_training_set_rejected(self):
        with pytest.raises(ValueError):
            hpn_train(build_predictor(SMALL, seed=0), [])


class TestPreLoss:
    def test_identical_observations_score_zero(self):
        obs = blob_episode(1)[0]
        assert pre_loss(obs, obs) == 0.0

    def test_single_map_cell_deviation(self):
        ep = blob_episode(2)
        truth, pred = ep[0], None
        grid = truth.vm.grid.copy()
        grid[4, 7] = np.float32(grid[4, 7] + 0.5) if grid[4, 7] < 0.5 \
            else np.float32(grid[4, 7] - 0.5)
        pred = Observation(vm=VelocityMap(grid=grid, config=OBS_CFG),
                           k=truth.k, t=truth.t)
        assert pre_loss(pred, truth) == pytest.approx(0.25, abs=1e-6)

    def test_kinematics_deviation_in_standard_units(self):
        truth = mk_obs(0, [(0, 0.0, 0.0, 10.0, 0.0)],
                       grid=np.zeros((8, 16), dtype=np.float32))
        k = truth.k.copy()
        k.values[0, 2] += 0.3
        pred = Observation(vm=truth.vm, k=k, t=0)
        assert pre_loss(pred, truth) == pytest.approx(0.09, abs=1e-12)


class TestHybridCorrection:
    def test_matching_rows_replaced_others_kept(self):
        pred = mk_obs(0, [(0, 0.0, 0.0, 10.0, 0.0),
                          (5, 12.0, 1.0, 9.0, 0.0)])
        row = np.array([14.0, 1.5, 9.5, 0.05])
        out = hybrid_correct(pred, {5: row})
        np.testing.assert_array_equal(out.k.values[1], row)
        np.testing.assert_array_equal(out.k.values[0], pred.k.values[0])
        assert out.vm is pred.vm

    def test_unmatched_ids_ignored(self):
        pred = mk_obs(0, [(0, 0.0, 0.0, 10.0, 0.0)])
        out = hybrid_correct(pred, {42: np.ones(4)})
        np.testing.assert_array_equal(out.k.values, pred.k.values)


class TestPredictionChain:
    def physically_consistent_history(self, ego_v=0.0):
        # neighbor id 7 moves at 5 m/s relative to a constant-speed ego,
        # so its relative position advances 2.5 m per 0.5 s frame
        hist = []
        for t in range(3):
            rows = [(0, 0.0, 0.0, ego_v, 0.0),
                    (7, 5.0 + 2.5 * t, 0.0, ego_v + 5.0, 0.0)]
            hist.append(mk_obs(t, rows, grid=np.zeros((8, 16),
                                                      dtype=np.float32)))
        return hist

    def test_rows_follow_physics_with_stationary_ego(self):
        model = build_predictor(SMALL, seed=0)
        hyps = prediction_chain(model, self.physically_consistent_history(),
                                m_steps=3, dt=0.5)
        assert [h.step for h in hyps] == [1, 2, 3]
        assert [h.obs.t for h in hyps] == [3, 4, 5]
        for h in hyps:
            assert h.source == "hybrid"
            np.testing.assert_allclose(h.offset, [0.0, 0.0], atol=1e-9)
            np.testing.assert_allclose(h.obs.k.values[1],
                                       [10.0 + 2.5 * h.step, 0.0, 5.0, 0.0],
                                       atol=1e-6)

    def test_offset_tracks_moving_ego(self):
        model = build_predictor(SMALL, seed=0)
        hyps = prediction_chain(model,
                                self.physically_consistent_history(ego_v=10.0),
                                m_steps=3, dt=0.5)
        for h in hyps:
            np.testing.assert_allclose(h.offset, [5.0 * h.step, 0.0],
                                       atol=1e-6)
            # +5 m/s relative: the gap keeps opening by 2.5 m per step
            np.testing.assert_allclose(h.obs.k.values[1][:2],
                                       [10.0 + 2.5 * h.step, 0.0], atol=1e-6)

    def test_replicated_warmup_frames_fall_back_to_constant_velocity(self):
        first = self.physically_consistent_history()[0]
        model = build_predictor(SMALL, seed=0)
        hyps = prediction_chain(model, [first, first, first], m_steps=1,
                                dt=0.5)
        np.testing.assert_allclose(hyps[0].obs.k.values[1],
                                   [7.5, 0.0, 5.0, 0.0], atol=1e-9)

    def test_without_physics_source_is_network_feedback(self):
        model = build_predictor(SMALL, seed=0)
        hyps = prediction_chain(model, self.physically_consistent_history(),
                                m_steps=2, dt=0.5, use_gp=False)
        assert all(h.source == "ae" for h in hyps)

    def test_short_history_rejected(self):
        model = build_predictor(SMALL, seed=0)
        with pytest.raises(ValueError):
            prediction_chain(model, self.physically_consistent_history()[:2],
                             m_steps=2, dt=0.5)


class TestPersistence:
    def test_roundtrip_preserves_behavior(self, tmp_path):
        model = build_predictor(SMALL, seed=4)
        model.k_stats = KStats(mean=np.array([0.0, 0.0, 11.0, 0.0]),
                               std=np.array([5.0, 1.0, 2.0, 0.2]))
        path = str(tmp_path / "predictor.npz")
        save_predictor(model, path)
        back = load_predictor(path)
        assert back.config == SMALL
        hist = blob_episode(3)
        a, b = hpn_forward(model, hist), hpn_forward(back, hist)
        np.testing.assert_array_equal(a.vm.grid, b.vm.grid)
        np.testing.assert_array_equal(a.k.values, b.k.values)

    def test_unknown_format_version_rejected(self, tmp_path):
        path = str(tmp_path / "bad.npz")
        meta = {"version": 99, "config": {}}
        np.savez(path,
                 meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                 params=np.zeros(3), k_mean=np.zeros(4), k_std=np.ones(4))
        with pytest.raises(ConfigurationError):
            load_predictor(path)


def test_predictor_net_gradients():
    model = build_predictor(SMALL, seed=6)
    net = model.net
    rng = np.random.default_rng(0)
    x_vm = rng.uniform(0, 1, (2, 3, 8, 16))
    x_k = rng.normal(size=(2, SMALL.k_flat))
    g_vm = rng.normal(size=(2, 8, 16))
    g_k = rng.normal(size=(2, 16))

    def loss():
        vm, kz = net.forward(x_vm, x_k)
        return float(np.sum(vm * g_vm) + np.sum(kz * g_k))

    net.forward(x_vm, x_k)
    grad = net.backward(g_vm, g_k)
    # a couple of slots from every layer family in the stack
    for name in ("enc0", "enc_fc", "kin_fc1", "dec_fc", "dec1", "dec0",
                 "kdec_fc2"):
        sl = net.index[name]
        for idx in rng.choice(np.arange(sl.start, sl.stop), 2, replace=False):
            assert rel_err(grad[idx],
                           numeric_grad(loss, net.params, int(idx))) < 1e-4
