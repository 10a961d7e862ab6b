"""Dynamic Window Approach local planner, the classical comparison baseline.

Samples admissible (v, w) pairs inside the dynamic window, rolls each
candidate arc forward against obstacle points derived from the pooled lidar
scan, discards colliding arcs and maximizes a weighted sum of goal-heading
alignment, clearance and forward velocity. Obstacle points come from the
same 60-sector scan the learned planner sees, for information parity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .simcore import RobotLimits, RobotState, wrap_angle


@dataclass
class DwaConfig:
    accel_v: float = 0.5          # m/s^2
    accel_w: float = 3.2          # rad/s^2
    n_v: int = 11
    n_w: int = 21
    horizon: float = 2.0          # s, long enough that turning away from a
    dt_rollout: float = 0.1       # blocked heading beats creeping to a stop
    weight_heading: float = 0.30
    weight_clearance: float = 0.40
    weight_velocity: float = 0.30
    clearance_cap: float = 1.0    # m, clearance beyond this scores full marks
    safety_margin: float = 0.07   # m, absorbs the 6-degree sector sampling gaps

    def __post_init__(self):
        for name in ("accel_v", "accel_w", "horizon", "dt_rollout",
                     "weight_heading", "weight_clearance", "weight_velocity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n_v < 2 or self.n_w < 2:
            raise ValueError("need at least 2 samples per axis")
        total = self.weight_heading + self.weight_clearance + self.weight_velocity
        self.weight_heading /= total
        self.weight_clearance /= total
        self.weight_velocity /= total

    @property
    def candidate_count(self) -> int:
        return self.n_v * self.n_w


def dynamic_window(state: RobotState, cfg: DwaConfig, limits: RobotLimits,
                   dt_cmd: float) -> tuple[float, float, float, float]:
    """Velocity box reachable within one control period: (v_lo, v_hi, w_lo, w_hi)."""
    v_lo = max(0.0, state.v - cfg.accel_v * dt_cmd)
    v_hi = min(limits.v_max, state.v + cfg.accel_v * dt_cmd)
    w_lo = max(-limits.omega_max, state.omega - cfg.accel_w * dt_cmd)
    w_hi = min(limits.omega_max, state.omega + cfg.accel_w * dt_cmd)
    return v_lo, v_hi, w_lo, w_hi


def scan_to_points(pose: tuple[float, float, float], sectors: np.ndarray,
                   max_range: float) -> np.ndarray:
    """Obstacle points from sector minima; full-range sectors carry no hit."""
    sectors = np.asarray(sectors, dtype=float)
    n = sectors.shape[0]
    hit = sectors < max_range - 1e-9
    if not hit.any():
        return np.zeros((0, 2))
    bearings = pose[2] + 2.0 * math.pi * (np.arange(n)[hit] + 0.5) / n
    r = sectors[hit]
    return np.stack([pose[0] + r * np.cos(bearings),
                     pose[1] + r * np.sin(bearings)], axis=1)


def rollout_poses(pose: tuple[float, float, float], v: np.ndarray, w: np.ndarray,
                  cfg: DwaConfig) -> np.ndarray:
    """Arc positions for every candidate, shape (n_candidates, n_steps, 2)."""
    steps = max(1, int(round(cfg.horizon / cfg.dt_rollout)))
    tau = cfg.dt_rollout * np.arange(1, steps + 1)
    v = v[:, None]
    w = w[:, None]
    th0 = pose[2]
    straight = np.abs(w) <= 1e-9
    w_safe = np.where(straight, 1.0, w)
    r = v / w_safe
    th = th0 + w * tau
    xs_arc = pose[0] + r * (np.sin(th) - math.sin(th0))
    ys_arc = pose[1] + r * (math.cos(th0) - np.cos(th))
    xs_lin = pose[0] + v * tau * math.cos(th0)
    ys_lin = pose[1] + v * tau * math.sin(th0)
    xs = np.where(straight, xs_lin, xs_arc)
    ys = np.where(straight, ys_lin, ys_arc)
    return np.stack([xs, ys], axis=2)


def dwa_plan(
    state: RobotState,
    goal: tuple[float, float],
    scan_sectors: np.ndarray,
    cfg: DwaConfig,
    limits: RobotLimits = RobotLimits(),
    max_range: float = 3.5,
    robot_radius: float = 0.105,
    dt_cmd: float = 0.33,
) -> tuple[float, float]:
    """Best admissible (v, w) command for the current state and scan.

    If every candidate's rollout collides, falls back to rotating in place
    toward the goal at full angular speed.
    """
    if np.asarray(scan_sectors).size == 0:
        raise ValueError("scan must be nonempty")
    v_lo, v_hi, w_lo, w_hi = dynamic_window(state, cfg, limits, dt_cmd)
    vs = np.linspace(v_lo, v_hi, cfg.n_v)
    ws = np.linspace(w_lo, w_hi, cfg.n_w)
    v_grid, w_grid = np.meshgrid(vs, ws, indexing="ij")
    v_flat = v_grid.ravel()
    w_flat = w_grid.ravel()

    pose = (state.x, state.y, state.theta)
    poses = rollout_poses(pose, v_flat, w_flat, cfg)          # (C, T, 2)
    points = scan_to_points(pose, scan_sectors, max_range)    # (P, 2)
    if points.shape[0]:
        # |a-b|^2 = |a|^2 + |b|^2 - 2 a.b lets one GEMM cover all pairs
        flat = poses.reshape(-1, 2)
        d2 = (np.einsum("ij,ij->i", flat, flat)[:, None]
              + np.einsum("ij,ij->i", points, points)[None, :]
              - 2.0 * (flat @ points.T))
        min_d2 = d2.reshape(poses.shape[0], -1).min(axis=1)
        min_clear = (np.sqrt(np.maximum(min_d2, 0.0))
                     - robot_radius - cfg.safety_margin)       # (C,)
    else:
        min_clear = np.full(v_flat.shape, cfg.clearance_cap)
    feasible = min_clear > 0.0
    if not feasible.any():
        return 0.0, _recovery_turn(scan_sectors, limits)

    end = poses[:, -1, :]
    end_theta = wrap_angle_array(state.theta + w_flat * cfg.horizon)
    gdx = goal[0] - end[:, 0]
    gdy = goal[1] - end[:, 1]
    herr = np.abs(wrap_angle_array(np.arctan2(gdy, gdx) - end_theta))
    score_h = 1.0 - herr / math.pi
    score_c = np.clip(min_clear, 0.0, cfg.clearance_cap) / cfg.clearance_cap
    score_v = v_flat / limits.v_max if limits.v_max > 0 else np.zeros_like(v_flat)
    score = (cfg.weight_heading * score_h + cfg.weight_clearance * score_c
             + cfg.weight_velocity * score_v)
    score = np.where(feasible, score, -np.inf)
    best = int(np.argmax(score))
    v_best = float(v_flat[best])
    w_best = float(w_flat[best])
    # classical stuck recovery: the scorer retaining under 35% of the
    # reachable speed means the way ahead is blocked (a scoring local
    # minimum, e.g. square in front of an obstacle); commit to rotating
    # toward the freer side until forward candidates win again (turning
    # toward the goal would just dither when the blockage is dead ahead)
    if v_best < max(1e-3, 0.35 * v_hi):
        return 0.0, _recovery_turn(scan_sectors, limits)
    return v_best, w_best


def wrap_angle_array(theta: np.ndarray) -> np.ndarray:
    """Vectorized wrap to (-pi, pi]."""
    return theta - 2.0 * math.pi * np.ceil((theta - math.pi) / (2.0 * math.pi))


def _recovery_turn(scan_sectors: np.ndarray, limits: RobotLimits) -> float:
    """Rotate-in-place direction: the half-plane with more measured free
    space. Sector bearings [0, pi) are the robot's left."""
    sectors = np.asarray(scan_sectors, dtype=float)
    half = sectors.shape[0] // 2
    left = float(sectors[:half].mean())
    right = float(sectors[half:].mean())
    return limits.omega_max if left >= right else -limits.omega_max


def _goal_heading(pose: tuple[float, float, float], goal: tuple[float, float]) -> tuple[float, float]:
    dx = goal[0] - pose[0]
    dy = goal[1] - pose[1]
    return math.hypot(dx, dy), wrap_angle(math.atan2(dy, dx) - pose[2])
