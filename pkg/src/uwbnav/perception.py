"""Builds the 62-element agent observation from a dense lidar scan.

The scan is reduced to 60 sector minima (nearest obstacle per bearing arc),
then goal distance and goal heading are appended. Raw physical values and
the normalized network input are both exposed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .simcore import wrap_angle

N_SECTORS = 60
OBS_DIM = N_SECTORS + 2


@dataclass
class PerceptionConfig:
    n_sectors: int = N_SECTORS
    max_range: float = 3.5        # m, lidar truncation
    outlier_floor: float = 0.05   # m, readings below this are spurious returns
    d_norm: float = 5.0           # m, goal-distance normalizer (scenario diagonal)


@dataclass
class Observation:
    """Sector minima (meters), goal distance (m) and goal heading (rad).

    Component order is fixed: sectors[0..59], distance, heading. Sector k
    covers the bearing arc [2*pi*k/60, 2*pi*(k+1)/60) measured from the
    robot heading.
    """
    sectors: np.ndarray
    goal_distance: float
    goal_heading: float

    def vector(self, cfg: PerceptionConfig) -> np.ndarray:
        """Normalized 62-vector for network input."""
        out = np.empty(len(self.sectors) + 2)
        out[:-2] = self.sectors / cfg.max_range
        out[-2] = self.goal_distance / cfg.d_norm
        out[-1] = self.goal_heading / math.pi
        return out


def sector_min_pool(ranges: np.ndarray, n_sectors: int = N_SECTORS,
                    outlier_floor: float = 0.05) -> np.ndarray:
    """Per-sector minimum of the non-outlier readings.

    Readings below outlier_floor are treated as spurious and ignored, unless
    a sector contains nothing else; then its raw minimum is returned rather
    than fabricating free space.
    """
    ranges = np.asarray(ranges, dtype=float)
    if outlier_floor < 0:
        raise ValueError("outlier_floor must be >= 0")
    if ranges.size % n_sectors != 0:
        raise ValueError(
            f"scan length {ranges.size} not divisible by {n_sectors} sectors")
    per = ranges.size // n_sectors
    grouped = ranges.reshape(n_sectors, per)
    raw_min = grouped.min(axis=1)
    masked = np.where(grouped >= outlier_floor, grouped, np.inf)
    clean_min = masked.min(axis=1)
    return np.where(np.isfinite(clean_min), clean_min, raw_min)


def goal_polar(pose: tuple[float, float, float], goal: tuple[float, float]) -> tuple[float, float]:
    """(Euclidean distance, heading error in (-pi, pi]) from pose to goal."""
    x, y, theta = pose
    dx = goal[0] - x
    dy = goal[1] - y
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        return 0.0, 0.0
    return dist, wrap_angle(math.atan2(dy, dx) - theta)


def build_observation(
    scan: np.ndarray,
    pose_estimate: tuple[float, float, float],
    goal: tuple[float, float],
    cfg: PerceptionConfig,
) -> Observation:
    """Assemble the observation from a dense scan and the estimated pose.

    The scan must come from the same pose's lidar (true pose in simulation);
    the goal polar coordinates use pose_estimate, which is the localizer
    output in deployment and odometry during training.
    """
    sectors = sector_min_pool(scan, cfg.n_sectors, cfg.outlier_floor)
    dist, heading = goal_polar(pose_estimate, goal)
    return Observation(sectors=sectors, goal_distance=dist, goal_heading=heading)
