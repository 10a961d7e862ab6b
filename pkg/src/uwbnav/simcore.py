"""Deterministic fixed-step 2D world for a differential-drive robot.

Geometry is segment based: walls and obstacles are 2D line segments stored
as (N, 4) float arrays of [x1, y1, x2, y2]. The robot is a disc. Kinematics
use the closed-form arc solution of the unicycle model, so integration
accuracy does not depend on the step size.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# Default parameters for a small indoor differential-drive platform.
V_MAX_DEFAULT = 0.2          # m/s
OMEGA_MAX_DEFAULT = 1.0      # rad/s
ROBOT_RADIUS_DEFAULT = 0.105  # m, chassis half-width
SIM_DT_DEFAULT = 0.0035      # s
CONTROL_PERIOD_DEFAULT = 0.33  # s

# Control commands are held for ceil(0.33 / 0.0035) = 95 simulation steps.
SUBSTEPS_DEFAULT = math.ceil(CONTROL_PERIOD_DEFAULT / SIM_DT_DEFAULT)


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    if -math.pi < theta <= math.pi:
        return theta
    return theta - TWO_PI * math.ceil((theta - math.pi) / TWO_PI)


@dataclass
class RobotLimits:
    v_max: float = V_MAX_DEFAULT
    omega_max: float = OMEGA_MAX_DEFAULT


@dataclass
class SimParams:
    """Fixed-step integration settings shared by training and evaluation."""
    dt: float = SIM_DT_DEFAULT
    control_period: float = CONTROL_PERIOD_DEFAULT
    robot_radius: float = ROBOT_RADIUS_DEFAULT
    limits: RobotLimits = field(default_factory=RobotLimits)
    n_rays: int = 360

    @property
    def n_substeps(self) -> int:
        return math.ceil(self.control_period / self.dt)

    @property
    def step_duration(self) -> float:
        """Actual sim-time length of one control step (n_substeps * dt)."""
        return self.n_substeps * self.dt


@dataclass
class RobotState:
    """Planar pose plus the currently commanded velocities.

    theta is kept in (-pi, pi]; t is simulation time in seconds.
    """
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    v: float = 0.0
    omega: float = 0.0
    t: float = 0.0


def clip_command(cmd: tuple[float, float], limits: RobotLimits) -> tuple[float, float]:
    """Clip (v, omega) to [0, v_max] x [-omega_max, omega_max]."""
    v = min(max(cmd[0], 0.0), limits.v_max)
    w = min(max(cmd[1], -limits.omega_max), limits.omega_max)
    return v, w


def step_kinematics(
    state: RobotState,
    cmd: tuple[float, float],
    dt: float,
    limits: RobotLimits = RobotLimits(),
) -> RobotState:
    """Advance the unicycle model one step using the exact arc solution.

    Commands are clipped, never rejected. For |omega| <= 1e-9 the motion
    degenerates to a straight line.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    v, w = clip_command(cmd, limits)
    if abs(w) > 1e-9:
        r = v / w
        x = state.x + r * (math.sin(state.theta + w * dt) - math.sin(state.theta))
        y = state.y + r * (math.cos(state.theta) - math.cos(state.theta + w * dt))
    else:
        x = state.x + v * dt * math.cos(state.theta)
        y = state.y + v * dt * math.sin(state.theta)
    return RobotState(
        x=x,
        y=y,
        theta=wrap_angle(state.theta + w * dt),
        v=v,
        omega=w,
        t=state.t + dt,
    )


def arc_positions(state: RobotState, v: float, w: float, dt: float, n: int) -> np.ndarray:
    """Positions after 1..n substeps of dt under a constant (v, w) command.

    Closed form, so it matches n iterated calls of step_kinematics exactly
    (up to float roundoff). Returns an (n, 2) array.
    """
    k = np.arange(1, n + 1, dtype=float)
    if abs(w) > 1e-9:
        r = v / w
        th = state.theta + w * dt * k
        xs = state.x + r * (np.sin(th) - math.sin(state.theta))
        ys = state.y + r * (math.cos(state.theta) - np.cos(th))
    else:
        xs = state.x + v * dt * k * math.cos(state.theta)
        ys = state.y + v * dt * k * math.sin(state.theta)
    return np.stack([xs, ys], axis=1)


# ---------------------------------------------------------------------------
# maps and obstacles
# ---------------------------------------------------------------------------

def as_segment_array(segments) -> np.ndarray:
    """Coerce a sequence of (x1, y1, x2, y2) into an (N, 4) float64 array."""
    arr = np.asarray(segments, dtype=float)
    if arr.size == 0:
        return np.zeros((0, 4))
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.shape[1] != 4:
        raise ValueError(f"segments must have 4 columns, got shape {arr.shape}")
    return arr


@dataclass
class WorldMap:
    """Static walls plus the axis-aligned world bounds (xmin, ymin, xmax, ymax)."""
    segments: np.ndarray
    bounds: tuple[float, float, float, float]

    def __post_init__(self):
        self.segments = as_segment_array(self.segments)
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmax > xmin and ymax > ymin):
            raise ValueError(f"degenerate bounds {self.bounds}")
        if self.segments.shape[0]:
            lengths = np.hypot(
                self.segments[:, 2] - self.segments[:, 0],
                self.segments[:, 3] - self.segments[:, 1],
            )
            if np.any(lengths <= 0.0):
                bad = int(np.argmax(lengths <= 0.0))
                raise ValueError(f"segment {bad} has zero length")
            xs = self.segments[:, [0, 2]]
            ys = self.segments[:, [1, 3]]
            eps = 1e-9
            if (xs.min() < xmin - eps or xs.max() > xmax + eps
                    or ys.min() < ymin - eps or ys.max() > ymax + eps):
                raise ValueError("segment endpoints outside bounds")

    @property
    def diagonal(self) -> float:
        xmin, ymin, xmax, ymax = self.bounds
        return math.hypot(xmax - xmin, ymax - ymin)


@dataclass
class ObstacleScript:
    """A rigid segment set translated along piecewise-linear keyframes.

    shape is in the obstacle's local frame; waypoints are (time, x, y) with
    strictly increasing times. Before the first keyframe the obstacle sits at
    the first position; after the last it holds the last position.
    """
    shape: np.ndarray
    waypoints: list[tuple[float, float, float]]
    name: str = "obstacle"

    def __post_init__(self):
        self.shape = as_segment_array(self.shape)
        if not self.waypoints:
            raise ValueError(f"{self.name}: needs at least one waypoint")
        times = [w[0] for w in self.waypoints]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError(f"{self.name}: keyframe times must be strictly increasing")

    def position_at(self, t: float) -> tuple[float, float]:
        wp = self.waypoints
        if t <= wp[0][0]:
            return wp[0][1], wp[0][2]
        if t >= wp[-1][0]:
            return wp[-1][1], wp[-1][2]
        for (t0, x0, y0), (t1, x1, y1) in zip(wp, wp[1:]):
            if t0 <= t <= t1:
                a = (t - t0) / (t1 - t0)
                return x0 + a * (x1 - x0), y0 + a * (y1 - y0)
        return wp[-1][1], wp[-1][2]  # unreachable

    def positions_at(self, times: np.ndarray) -> np.ndarray:
        """Vectorized position_at; np.interp holds both ends."""
        tp = np.array([w[0] for w in self.waypoints])
        xs = np.interp(times, tp, np.array([w[1] for w in self.waypoints]))
        ys = np.interp(times, tp, np.array([w[2] for w in self.waypoints]))
        return np.stack([xs, ys], axis=1)

    def segments_at(self, t: float) -> np.ndarray:
        px, py = self.position_at(t)
        out = self.shape.copy()
        out[:, [0, 2]] += px
        out[:, [1, 3]] += py
        return out


def advance_obstacles(scripts: Sequence[ObstacleScript], t: float) -> np.ndarray:
    """All obstacle segments at time t, stacked into one (K, 4) array."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if not scripts:
        return np.zeros((0, 4))
    return np.vstack([s.segments_at(t) for s in scripts])


@dataclass
class ScenarioSpec:
    """A complete episode setup: map, start pose, goal list, scripted obstacles."""
    map: WorldMap
    start: tuple[float, float, float]
    goals: list[tuple[float, float]]
    obstacles: list[ObstacleScript] = field(default_factory=list)
    t_max: float = 180.0
    goal_radius: float = 0.2
    name: str = "scenario"

    def __post_init__(self):
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")
        if self.goal_radius <= 0:
            raise ValueError("goal_radius must be positive")
        if not self.goals:
            raise ValueError("at least one goal required")
        xmin, ymin, xmax, ymax = self.map.bounds
        pts = [(self.start[0], self.start[1], "start")]
        pts += [(gx, gy, f"goal {i}") for i, (gx, gy) in enumerate(self.goals)]
        for px, py, label in pts:
            if not (xmin <= px <= xmax and ymin <= py <= ymax):
                raise ValueError(f"{label} ({px}, {py}) outside bounds {self.map.bounds}")
            if self.map.segments.shape[0]:
                d = point_segment_distances(np.array([[px, py]]), self.map.segments).min()
                if d < ROBOT_RADIUS_DEFAULT:
                    raise ValueError(
                        f"{label} ({px}, {py}) inside a wall collision envelope "
                        f"(clearance {d:.3f} m)")

    def segments_at(self, t: float) -> np.ndarray:
        """Static walls plus moving-obstacle segments at time t."""
        moving = advance_obstacles(self.obstacles, t)
        if moving.shape[0] == 0:
            return self.map.segments
        if self.map.segments.shape[0] == 0:
            return moving
        return np.vstack([self.map.segments, moving])


# ---------------------------------------------------------------------------
# ray casting and distance queries
# ---------------------------------------------------------------------------

def cast_rays(
    segments: np.ndarray,
    origin: tuple[float, float],
    angles: np.ndarray,
    max_range: float,
) -> np.ndarray:
    """Distances from origin along each angle to the nearest segment hit.

    Rays that hit nothing (or only hit beyond max_range) return max_range.
    Parallel ray/segment pairs are treated as non-intersecting.
    """
    angles = np.asarray(angles, dtype=float)
    if segments.shape[0] == 0:
        return np.full(angles.shape, max_range)
    dx = np.cos(angles)[:, None]
    dy = np.sin(angles)[:, None]
    p1 = segments[:, 0:2]
    e = segments[:, 2:4] - p1
    rel = p1 - np.asarray(origin, dtype=float)
    denom = dx * e[:, 1] - dy * e[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rel[:, 0] * e[:, 1] - rel[:, 1] * e[:, 0]) / denom
        s = (dy * rel[:, 0] - dx * rel[:, 1]) / denom
    hit = (np.abs(denom) > 1e-12) & (t > 0.0) & (t <= max_range) & (s >= 0.0) & (s <= 1.0)
    t = np.where(hit, t, max_range)
    return t.min(axis=1)


def raycast(
    world: WorldMap | np.ndarray,
    origin: tuple[float, float],
    angle: float,
    max_range: float,
) -> float:
    """Single-ray variant of cast_rays."""
    if max_range <= 0:
        raise ValueError("max_range must be positive")
    segs = world.segments if isinstance(world, WorldMap) else as_segment_array(world)
    return float(cast_rays(segs, origin, np.array([angle]), max_range)[0])


def scan_lidar(
    world: WorldMap | np.ndarray,
    obstacles_at_t: np.ndarray,
    pose: RobotState,
    n_rays: int = 360,
    max_range: float = 3.5,
) -> np.ndarray:
    """Full 2-pi scan: ray i fires at world angle theta + 2*pi*i/n_rays."""
    if n_rays < 60:
        raise ValueError(f"n_rays must be >= 60, got {n_rays}")
    static = world.segments if isinstance(world, WorldMap) else as_segment_array(world)
    obstacles_at_t = as_segment_array(obstacles_at_t)
    if obstacles_at_t.shape[0]:
        segs = np.vstack([static, obstacles_at_t]) if static.shape[0] else obstacles_at_t
    else:
        segs = static
    angles = pose.theta + TWO_PI * np.arange(n_rays) / n_rays
    return cast_rays(segs, (pose.x, pose.y), angles, max_range)


def point_segment_distances(points: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Pairwise distances, shape (P, S), from each point to each segment."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    p1 = segments[:, 0:2]
    e = segments[:, 2:4] - p1
    len2 = np.einsum("ij,ij->i", e, e)
    rel = points[:, None, :] - p1[None, :, :]
    u = np.einsum("psj,sj->ps", rel, e) / np.maximum(len2, 1e-300)
    u = np.clip(u, 0.0, 1.0)
    closest = p1[None, :, :] + u[:, :, None] * e[None, :, :]
    d = points[:, None, :] - closest
    return np.sqrt(np.einsum("psj,psj->ps", d, d))


def check_collision(
    world: WorldMap | np.ndarray,
    obstacles_at_t: np.ndarray,
    pose: RobotState | tuple[float, float],
    robot_radius: float = ROBOT_RADIUS_DEFAULT,
) -> bool:
    """True iff the robot disc overlaps any segment (strict inequality)."""
    if robot_radius <= 0:
        raise ValueError("robot_radius must be positive")
    static = world.segments if isinstance(world, WorldMap) else as_segment_array(world)
    obstacles_at_t = as_segment_array(obstacles_at_t)
    if obstacles_at_t.shape[0]:
        segs = np.vstack([static, obstacles_at_t]) if static.shape[0] else obstacles_at_t
    else:
        segs = static
    if segs.shape[0] == 0:
        return False
    xy = (pose.x, pose.y) if isinstance(pose, RobotState) else pose
    d = point_segment_distances(np.array([xy]), segs).min()
    return bool(d < robot_radius)


# ---------------------------------------------------------------------------
# control-step rollout
# ---------------------------------------------------------------------------

@dataclass
class ControlStepResult:
    state: RobotState
    collided: bool
    collision_time: Optional[float] = None


def pose_along_arc(state: RobotState, v: float, w: float, tau: float) -> tuple[float, float, float]:
    """Pose reached tau seconds into a constant (v, w) command, closed form."""
    if abs(w) > 1e-9:
        r = v / w
        x = state.x + r * (math.sin(state.theta + w * tau) - math.sin(state.theta))
        y = state.y + r * (math.cos(state.theta) - math.cos(state.theta + w * tau))
    else:
        x = state.x + v * tau * math.cos(state.theta)
        y = state.y + v * tau * math.sin(state.theta)
    return x, y, wrap_angle(state.theta + w * tau)


def run_control_step(
    state: RobotState,
    cmd: tuple[float, float],
    scenario: ScenarioSpec,
    dt: float = SIM_DT_DEFAULT,
    n_sub: int = SUBSTEPS_DEFAULT,
    robot_radius: float = ROBOT_RADIUS_DEFAULT,
    limits: RobotLimits = RobotLimits(),
) -> ControlStepResult:
    """Hold cmd constant for n_sub simulation steps, checking collision each step.

    Collision is evaluated at every substep against walls and the moving
    obstacles at that substep's time; on a hit the state is frozen there.
    Moving the query point by the negated obstacle offset lets the whole
    window run as batched point-segment distances.
    """
    v, w = clip_command(cmd, limits)
    positions = arc_positions(state, v, w, dt, n_sub)
    dmin = np.full(n_sub, np.inf)
    segs = scenario.map.segments
    if segs.shape[0]:
        dmin = point_segment_distances(positions, segs).min(axis=1)
    if scenario.obstacles:
        times = state.t + dt * np.arange(1, n_sub + 1)
        for script in scenario.obstacles:
            if script.shape.shape[0] == 0:
                continue
            shifted = positions - script.positions_at(times)
            d = point_segment_distances(shifted, script.shape).min(axis=1)
            dmin = np.minimum(dmin, d)
    hits = np.nonzero(dmin < robot_radius)[0]
    k = int(hits[0]) + 1 if hits.size else n_sub
    new = RobotState(
        x=float(positions[k - 1, 0]),
        y=float(positions[k - 1, 1]),
        theta=wrap_angle(state.theta + w * dt * k),
        v=v,
        omega=w,
        t=state.t + dt * k,
    )
    if hits.size:
        return ControlStepResult(new, True, new.t)
    return ControlStepResult(new, False)


def sample_free_point(
    scenario: ScenarioSpec,
    rng: np.random.Generator,
    margin: float = 0.5,
    max_tries: int = 1000,
) -> tuple[float, float]:
    """Uniform point in the bounds at least `margin` from every segment."""
    xmin, ymin, xmax, ymax = scenario.map.bounds
    segs = scenario.map.segments
    for _ in range(max_tries):
        x = rng.uniform(xmin + margin, xmax - margin)
        y = rng.uniform(ymin + margin, ymax - margin)
        if segs.shape[0] == 0:
            return x, y
        if point_segment_distances(np.array([[x, y]]), segs).min() >= margin:
            return x, y
    raise RuntimeError("could not sample a free point; map too cluttered for margin")
