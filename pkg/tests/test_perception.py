import math

import numpy as np
import pytest

from uwbnav.perception import (
    OBS_DIM, PerceptionConfig, build_observation, goal_polar, sector_min_pool,
)
from uwbnav.simcore import RobotState, scan_lidar
from helpers import random_segments


def rotate_segments(segs, phi):
    c, s = math.cos(phi), math.sin(phi)
    rot = np.array([[c, -s], [s, c]])
    out = segs.copy()
    out[:, 0:2] = segs[:, 0:2] @ rot.T
    out[:, 2:4] = segs[:, 2:4] @ rot.T
    return out


class TestSectorMinPool:
    def test_plain_minimum(self):
        assert sector_min_pool(np.array([1.0, 0.5, 2.0]), 1, 0.05)[0] == 0.5

    def test_all_max_range(self):
        out = sector_min_pool(np.full(120, 3.5), 60, 0.05)
        assert np.all(out == 3.5)

    def test_outlier_skipped(self):
        # oracle: min over readings >= floor
        readings = np.array([0.01, 1.0, 1.1])
        expected = min(r for r in readings if r >= 0.05)
        assert sector_min_pool(readings, 1, 0.05)[0] == expected

    def test_all_outliers_returns_raw_min(self):
        out = sector_min_pool(np.array([0.02, 0.01, 0.04]), 1, 0.05)
        assert out[0] == pytest.approx(0.01)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            sector_min_pool(np.ones(100), 60, 0.05)

    def test_bounded_by_members(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            scan = rng.uniform(0.0, 3.5, size=360)
            out = sector_min_pool(scan, 60, 0.05)
            grouped = scan.reshape(60, 6)
            for k in range(60):
                valid = grouped[k][grouped[k] >= 0.05]
                if valid.size:
                    assert out[k] <= valid.min() + 1e-12


class TestGoalPolar:
    def test_ahead(self):
        assert goal_polar((0, 0, 0), (1, 0)) == pytest.approx((1.0, 0.0))

    def test_left(self):
        d, h = goal_polar((0, 0, 0), (0, 1))
        assert (d, h) == pytest.approx((1.0, math.pi / 2))

    def test_heading_relative(self):
        d, h = goal_polar((0, 0, math.pi / 2), (0, 1))
        assert (d, h) == pytest.approx((1.0, 0.0))

    def test_at_goal(self):
        assert goal_polar((2, 3, 1.0), (2, 3)) == (0.0, 0.0)


class TestBuildObservation:
    def test_empty_map_normalization(self):
        cfg = PerceptionConfig(max_range=3.5, d_norm=5.0)
        scan = np.full(360, 3.5)
        obs = build_observation(scan, (0, 0, 0), (1, 0), cfg)
        vec = obs.vector(cfg)
        assert vec.shape == (OBS_DIM,)
        assert np.all(vec[:60] == 1.0)
        assert vec[60] == pytest.approx(0.2)
        assert vec[61] == pytest.approx(0.0)

    def test_goal_at_robot(self):
        cfg = PerceptionConfig()
        obs = build_observation(np.full(360, 3.5), (1, 1, 0.3), (1, 1), cfg)
        assert obs.goal_distance == 0.0
        assert obs.goal_heading == 0.0

    def test_output_length_and_finite(self):
        cfg = PerceptionConfig()
        rng = np.random.default_rng(0)
        scan = rng.uniform(0.01, 3.5, 360)
        obs = build_observation(scan, (0, 0, 0), (2, 1), cfg)
        vec = obs.vector(cfg)
        assert vec.shape == (62,)
        assert np.all(np.isfinite(vec))

    def test_rotation_equivariance(self):
        cfg = PerceptionConfig(max_range=5.0, d_norm=5.0)
        rng = np.random.default_rng(6)
        for _ in range(20):
            segs = random_segments(rng, 8, lo=-4, hi=4)
            pose = (0.0, 0.0, rng.uniform(-1, 1))
            goal = tuple(rng.uniform(-2, 2, 2))
            phi = rng.uniform(-math.pi, math.pi)
            base = build_observation(
                scan_lidar(segs, np.zeros((0, 4)), RobotState(theta=pose[2]),
                           360, cfg.max_range),
                pose, goal, cfg)
            rot_pose = (0.0, 0.0, pose[2] + phi)
            c, s = math.cos(phi), math.sin(phi)
            rot_goal = (c * goal[0] - s * goal[1], s * goal[0] + c * goal[1])
            rotated = build_observation(
                scan_lidar(rotate_segments(segs, phi), np.zeros((0, 4)),
                           RobotState(theta=rot_pose[2]), 360, cfg.max_range),
                rot_pose, rot_goal, cfg)
            assert np.allclose(base.sectors, rotated.sectors, atol=1e-9)
            assert base.goal_distance == pytest.approx(rotated.goal_distance, abs=1e-9)
            assert math.sin(base.goal_heading) == pytest.approx(
                math.sin(rotated.goal_heading), abs=1e-9)
