"""Observation tests: velocity-map rasterization, kinematics rows, history."""
import numpy as np
import pytest

from helpers import av, build_world, hv

from predrive.observe import (HistoryBuffer, ObservationConfig, StateStack,
                              drivable_mask, extract_kinematics, observe,
                              rasterize)
from predrive.sim.road import Road, default_spec

CFG = ObservationConfig()


def test_grid_geometry():
    assert CFG.cell_long == pytest.approx(1.875)
    assert CFG.cell_lat == pytest.approx(1.0)


class TestVelocityMap:
    def test_empty_road_shows_only_ego(self):
        world = build_world([av(0, x=100.0, lane=1, v=20.0)])
        grid = rasterize(world, 0).grid
        assert grid.dtype == np.float32
        assert grid.shape == (16, 64)
        # 5 m x 2 m footprint at cell size 1.875 m x 1 m -> 4 x 2 cells
        assert grid[8, 32] == 0.5
        assert (grid == 0.5).sum() == 8
        assert (grid == 0.0).sum() == grid.size - 8

    def test_faster_neighbor_cell_value(self):
        # +10 m/s relative at v_norm 20 -> 0.5 + 10/40 = 0.75
        world = build_world([av(0, x=100.0, lane=1, v=20.0),
                             hv(1, x=120.0, lane=1, v=30.0)])
        grid = rasterize(world, 0).grid
        assert grid[8, 42] == pytest.approx(0.75)
        assert (grid == np.float32(0.75)).sum() == 6

    def test_much_slower_neighbor_clamps_to_floor(self):
        world = build_world([av(0, x=100.0, lane=1, v=30.0),
                             hv(1, x=120.0, lane=1, v=0.0)])
        grid = rasterize(world, 0).grid
        assert grid[8, 42] == pytest.approx(0.01)

    def test_ego_painted_last(self):
        # neighbor footprint overlapping the ego cells never overwrites them
        world = build_world([av(0, x=100.0, lane=1, v=10.0),
                             hv(1, x=103.0, lane=1, v=30.0)])
        grid = rasterize(world, 0).grid
        assert grid[8, 32] == 0.5
        assert grid[8, 33] == 0.5

    def test_translation_invariance(self):
        a = build_world([av(0, x=100.0, lane=1, v=20.0),
                         hv(1, x=81.0, lane=0, v=24.0)])
        b = build_world([av(0, x=612.0, lane=1, v=20.0),
                         hv(1, x=593.0, lane=0, v=24.0)])
        assert np.array_equal(rasterize(a, 0).grid, rasterize(b, 0).grid)

    def test_out_of_window_vehicle_invisible(self):
        world = build_world([av(0, x=100.0, lane=1, v=20.0),
                             hv(1, x=165.0, lane=1, v=30.0)])
        grid = rasterize(world, 0).grid
        assert (grid == 0.5).sum() == 8 and not (grid > 0.5).any()


class TestKinematics:
    def test_ego_row_first_and_relative(self):
        world = build_world([av(0, x=100.0, lane=1, v=20.0, psi=0.1),
                             hv(1, x=120.0, lane=2, v=25.0)])
        k = extract_kinematics(world, 0)
        assert k.ids[0] == 0 and k.mask[0]
        assert tuple(k.values[0]) == (0.0, 0.0, 20.0, 0.1)
        assert k.ids[1] == 1
        np.testing.assert_allclose(k.values[1], [20.0, 4.0, 25.0, 0.0])

    def test_nearest_first_with_id_tiebreak(self):
        world = build_world([av(0, x=100.0, lane=1, v=20.0),
                             hv(3, x=110.0, lane=1, v=20.0),
                             hv(2, x=90.0, lane=1, v=20.0),
                             hv(1, x=130.0, lane=1, v=20.0)])
        k = extract_kinematics(world, 0)
        # ids 2 and 3 are both 10 m away: lower id wins the tie
        assert list(k.ids[:4]) == [0, 2, 3, 1]

    def test_capacity_and_padding(self):
        vehicles = [av(0, x=100.0, lane=1, v=20.0)]
        vehicles += [hv(i, x=100.0 + 6.0 * i, lane=1, v=20.0)
                     for i in range(1, 10)]
        k = extract_kinematics(build_world(vehicles), 0)
        assert k.mask.all()          # 1 ego + 7 nearest fill all 8 rows
        assert -1 not in k.ids
        # row 7 holds the 7th-nearest neighbor, id 7 at +42 m
        assert k.ids[7] == 7

    def test_absent_rows_zeroed(self):
        k = extract_kinematics(build_world([av(0, x=100.0, v=20.0)]), 0)
        assert not k.mask[1:].any()
        assert (k.ids[1:] == -1).all()
        assert not k.values[1:].any()

    def test_perception_window(self):
        world = build_world([av(0, x=100.0, lane=1, v=20.0),
                             hv(1, x=161.0, lane=1, v=20.0),    # 61 m ahead
                             hv(2, x=100.0, lane=1, v=20.0, y=12.5)])
        k = extract_kinematics(world, 0)
        assert not k.mask[1:].any()


class TestHistory:
    def test_warmup_replicates_oldest(self):
        world = build_world([av(0, x=100.0, v=20.0)])
        o1 = observe(world, 0, t=0)
        buf = HistoryBuffer(4).push(o1)
        snap = buf.snapshot()
        assert len(snap) == 4 and all(s is o1 for s in snap)

    def test_rolling_window(self):
        world = build_world([av(0, x=100.0, v=20.0)])
        obs = [observe(world, 0, t=t) for t in range(6)]
        buf = HistoryBuffer(3)
        for o in obs:
            buf.push(o)
        assert [o.t for o in buf.snapshot()] == [3, 4, 5]

    def test_empty_snapshot_rejected(self):
        with pytest.raises(ValueError):
            HistoryBuffer(3).snapshot()

    def test_zero_length_rejected(self):
        with pytest.raises(ValueError):
            HistoryBuffer(0)


def test_state_stack_counts_and_order():
    world = build_world([av(0, x=100.0, v=20.0)])
    past = [observe(world, 0, t=t) for t in range(3)]
    pred = [observe(world, 0, t=t) for t in range(3, 5)]
    stack = StateStack(past=past, predicted=pred)
    assert stack.n == 3 and stack.m == 2
    assert [o.t for o in stack.all_obs()] == [0, 1, 2, 3, 4]


class TestDrivableMask:
    def test_highway_band_rows(self):
        # three lanes: drivable y in [-2, 10]; ego at y=4 sees the band in
        # rows 2..13 (centers y = row - 3.5) with walls above and below
        road = Road(default_spec("highway"))
        mask = drivable_mask(road, ego_x=100.0, ego_y=4.0)
        assert mask.shape == (16, 64) and mask.dtype == np.bool_
        assert mask[2:14, :].all()
        assert not mask[:2, :].any() and not mask[14:, :].any()

    def test_band_follows_ego_laterally(self):
        # from the leftmost lane (y=0) the same band sits lower in the window
        road = Road(default_spec("highway"))
        mask = drivable_mask(road, ego_x=100.0, ego_y=0.0)
        assert mask[6:, :].all() and not mask[:6, :].any()

    def test_merge_ramp_terminates_in_window(self):
        # ramp (lane 3, y band [10, 14]) ends at x=320; from x=290 the wall
        # starts at column 48 (centers x = 230 + (c + 0.5) * 1.875)
        road = Road(default_spec("merging"))
        mask = drivable_mask(road, ego_x=290.0, ego_y=12.0)
        assert mask[:6, :].all()              # mainline, whole window
        assert mask[6:10, :48].all()          # ramp band up to the taper end
        assert not mask[6:10, 48:].any()      # past the end of the ramp
        assert not mask[10:, :].any()         # right of the ramp

    def test_ramp_far_from_end_is_uninterrupted(self):
        road = Road(default_spec("merging"))
        mask = drivable_mask(road, ego_x=150.0, ego_y=12.0)
        assert mask[6:10, :].all()

    def test_exit_ramp_begins_at_onset(self):
        # exiting: the ramp exists only for x >= 300; from x=250 in the
        # rightmost main lane it appears from column 59 onward
        road = Road(default_spec("exiting"))
        mask = drivable_mask(road, ego_x=250.0, ego_y=8.0)
        assert mask[:10, :].all()
        assert not mask[10:14, :59].any()
        assert mask[10:14, 59:].all()
        assert not mask[14:, :].any()

    def test_observe_attaches_mask(self):
        world = build_world([av(0, x=100.0, lane=1, v=20.0)])
        obs = observe(world, 0, t=0)
        np.testing.assert_array_equal(
            obs.road_mask, drivable_mask(world.road, 100.0, 4.0))
