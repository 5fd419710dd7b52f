"""Trajectory forecasting tests: closed-form baselines and GP schemes."""
import numpy as np
import pytest

from predrive.gp.forecast import (KinematicForecast, VehicleTrack,
                                  position_error, predict_ca, predict_cs,
                                  predict_direct, predict_indirect)

T4 = np.array([0.0, 0.5, 1.0, 1.5])


def straight_track(v=8.0, psi=0.0, x0=3.0, y0=2.0, vid=1):
    return VehicleTrack(t=T4, x=x0 + v * np.cos(psi) * T4,
                        y=y0 + v * np.sin(psi) * T4,
                        v=np.full(4, v), psi=np.full(4, psi), vid=vid)


class TestConstantSpeed:
    def test_positions_follow_the_closed_form(self):
        trk = straight_track(v=10.0, psi=0.3)
        fc = predict_cs(trk, horizon=5, dt=0.5)
        k = np.arange(1, 6)
        np.testing.assert_allclose(fc.steps[:, 0, 0],
                                   trk.x[-1] + k * 0.5 * 10.0 * np.cos(0.3),
                                   atol=1e-12)
        np.testing.assert_allclose(fc.steps[:, 0, 1],
                                   trk.y[-1] + k * 0.5 * 10.0 * np.sin(0.3),
                                   atol=1e-12)
        assert (fc.steps[:, 0, 2] == 10.0).all()
        assert (fc.steps[:, 0, 3] == 0.3).all()

    def test_needs_one_sample(self):
        empty = VehicleTrack(t=[], x=[], y=[], v=[], psi=[])
        with pytest.raises(ValueError):
            predict_cs(empty, horizon=3, dt=0.5)


class TestConstantAcceleration:
    def test_exact_on_uniformly_accelerating_motion(self):
        # per-step trapezoids of a linear speed profile integrate exactly:
        # x(T) = x0 + v0*T + a*T^2/2
        v0, a, dt = 7.0, 1.5, 0.5
        trk = VehicleTrack(t=T4, x=v0 * T4 + 0.5 * a * T4 ** 2,
                           y=np.zeros(4), v=v0 + a * T4, psi=np.zeros(4))
        fc = predict_ca(trk, horizon=8, dt=dt)
        for k in range(1, 9):
            T = T4[-1] + k * dt
            expect = v0 * T + 0.5 * a * T ** 2
            assert fc.steps[k - 1, 0, 0] == pytest.approx(expect, abs=1e-9)
            assert fc.steps[k - 1, 0, 2] == pytest.approx(v0 + a * T, abs=1e-9)

    def test_speed_clamps_at_zero(self):
        trk = VehicleTrack(t=T4, x=T4 * 4.0, y=np.zeros(4),
                           v=np.array([10.0, 7.0, 4.0, 1.0]), psi=np.zeros(4))
        fc = predict_ca(trk, horizon=4, dt=0.5)
        assert (fc.steps[:, 0, 2] == 0.0).all()    # -6 m/s^2 from 1 m/s
        # position freezes once stopped
        assert fc.steps[1, 0, 0] == fc.steps[3, 0, 0]

    def test_needs_two_samples(self):
        trk = VehicleTrack(t=[0.0], x=[0.0], y=[0.0], v=[5.0], psi=[0.0])
        with pytest.raises(ValueError):
            predict_ca(trk, horizon=3, dt=0.5)


class TestGpSchemes:
    def test_indirect_equals_cs_on_straight_history(self):
        trk = straight_track()
        ind = predict_indirect(trk, horizon=6, dt=0.5)
        cs = predict_cs(trk, horizon=6, dt=0.5)
        np.testing.assert_allclose(ind.steps, cs.steps, atol=1e-9)
        assert not ind.fallback

    def test_direct_holds_a_stationary_vehicle(self):
        trk = VehicleTrack(t=T4, x=np.full(4, 7.0), y=np.full(4, -1.0),
                           v=np.zeros(4), psi=np.full(4, 0.3))
        fc = predict_direct(trk, horizon=3, dt=0.5)
        np.testing.assert_allclose(fc.steps[:, 0, 0], 7.0, atol=1e-9)
        np.testing.assert_allclose(fc.steps[:, 0, 1], -1.0, atol=1e-9)
        # degenerate displacement keeps the last observed heading
        assert (fc.steps[:, 0, 3] == 0.3).all()

    def test_indirect_unwraps_heading_across_pi(self):
        psi = np.array([2.95, 3.05, -3.13, -3.03])   # +0.1 rad per sample
        trk = VehicleTrack(t=T4, x=np.zeros(4), y=np.zeros(4),
                           v=np.full(4, 5.0), psi=psi)
        fc = predict_indirect(trk, horizon=2, dt=0.5)
        # the trend continues past +pi instead of snapping to the raw -3.03
        assert (fc.steps[:, 0, 3] > 3.1).all()

    def test_multi_vehicle_layout(self):
        tracks = [straight_track(vid=4), straight_track(v=12.0, vid=9)]
        fc = predict_indirect(tracks, horizon=3, dt=0.5)
        assert fc.steps.shape == (3, 2, 4)
        assert list(fc.ids) == [4, 9]
        np.testing.assert_allclose(fc.vehicle(9)[:, 2], 12.0, atol=1e-9)

    def test_short_history_rejected(self):
        trk = VehicleTrack(t=[0.0], x=[0.0], y=[0.0], v=[5.0], psi=[0.0])
        with pytest.raises(ValueError):
            predict_indirect(trk, horizon=3, dt=0.5)
        with pytest.raises(ValueError):
            predict_direct(trk, horizon=3, dt=0.5)


class TestPositionError:
    def test_zero_for_identical(self):
        fc = predict_cs(straight_track(), horizon=4, dt=0.5)
        assert position_error(fc, fc) == 0.0

    def test_uniform_offset_is_its_norm(self):
        fc = predict_cs(straight_track(), horizon=4, dt=0.5)
        shifted = KinematicForecast(steps=fc.steps.copy(), ids=fc.ids,
                                    method="cs", dt=0.5)
        shifted.steps[:, :, 0] += 3.0
        shifted.steps[:, :, 1] += 4.0
        assert position_error(shifted, fc) == pytest.approx(5.0, abs=1e-12)

    def test_shape_mismatch_rejected(self):
        fc4 = predict_cs(straight_track(), horizon=4, dt=0.5)
        fc5 = predict_cs(straight_track(), horizon=5, dt=0.5)
        with pytest.raises(ValueError):
            position_error(fc4, fc5)
