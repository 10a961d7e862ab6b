"""Closed-loop evaluation: planner vs scenario with UWB localization in the
loop, trajectory logging, the navigation metrics, and comparison tables.

Each control step the harness localizes (Kalman + Gauss-Newton at 10 Hz in
sim time), builds the observation with the ESTIMATED position for the goal
polar and the TRUE pose for the lidar, asks the planner for a normalized
command, and advances the fixed-step world. Waypoints advance on estimated
distance; the true pose is logged alongside for post-hoc analysis.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional

import numpy as np

from .dwa import DwaConfig, dwa_plan
from .nets import ActorNet
from .perception import Observation, PerceptionConfig, build_observation
from .simcore import (
    RobotState, ScenarioSpec, SimParams, advance_obstacles, pose_along_arc,
    run_control_step, scan_lidar,
)
from .uwb import (
    SIGMA_M2_DEFAULT, SIGMA_P2_DEFAULT, AnchorSet, RangeLocalizer,
    RangingNoiseModel, RangingRecord, corner_anchor_set, flags_for,
    simulate_ranges,
)

EVENT_GOAL = "goal_reached"
EVENT_COLLISION = "collision"
EVENT_TIMEOUT = "timeout"
EVENT_WAYPOINT = "waypoint_advanced"
EVENT_ABORTED = "aborted"
TERMINAL_EVENTS = (EVENT_GOAL, EVENT_COLLISION, EVENT_TIMEOUT)


class EpisodeAborted(RuntimeError):
    """Planner I/O failed mid-episode; the partial log is preserved."""

    def __init__(self, message: str, partial_log: "TrajectoryLog"):
        super().__init__(message)
        self.partial_log = partial_log


@dataclass
class UwbConfig:
    """Localizer settings; anchors default to the scenario bounds corners.

    perfect=True bypasses the ranging pipeline entirely (estimate == truth);
    note that even noiseless ranging leaves a small constant-value-filter lag
    while the robot moves, so the bypass is the only true identity mode.
    """
    anchors: Optional[AnchorSet] = None
    sigma_m2: float = SIGMA_M2_DEFAULT
    sigma_p2: float = SIGMA_P2_DEFAULT
    update_period: float = 0.1
    perfect: bool = False

    def resolve_anchors(self, scenario: ScenarioSpec) -> AnchorSet:
        return self.anchors or corner_anchor_set(scenario.map.bounds)


@dataclass
class PlannerInput:
    """Everything a local planner may legitimately see at one control step."""
    obs: Observation
    vec: np.ndarray
    est_pose: tuple[float, float, float]
    goal: tuple[float, float]
    cmd_v: float
    cmd_w: float
    max_range: float


class RlPlanner:
    """Frozen policy network driving through its normalized observation."""

    def __init__(self, actor: ActorNet, planner_id: str = "rl"):
        self.actor = actor
        self.planner_id = planner_id

    def reset(self) -> None:
        pass

    def decide(self, inp: PlannerInput) -> tuple[float, float]:
        a = self.actor.forward(inp.vec)
        return float(a[0]), float(a[1])


class DwaPlanner:
    """Classical baseline; plans in physical units from the estimated pose."""

    def __init__(self, cfg: Optional[DwaConfig] = None, planner_id: str = "dwa"):
        self.cfg = cfg or DwaConfig()
        self.planner_id = planner_id

    def reset(self) -> None:
        pass

    def decide(self, inp: PlannerInput) -> tuple[float, float]:
        st = RobotState(x=inp.est_pose[0], y=inp.est_pose[1], theta=inp.est_pose[2],
                        v=inp.cmd_v, omega=inp.cmd_w)
        v, w = dwa_plan(st, inp.goal, inp.obs.sectors, self.cfg,
                        max_range=inp.max_range)
        return v / 0.2, w / 1.0


class ExternalPlanner:
    """Replays a pre-recorded or externally supplied command stream."""

    def __init__(self, commands: Iterable[tuple[float, float]],
                 planner_id: str = "external"):
        self._commands = commands
        self._it: Optional[Iterator[tuple[float, float]]] = None
        self.planner_id = planner_id

    def reset(self) -> None:
        self._it = iter(self._commands)

    def decide(self, inp: PlannerInput) -> tuple[float, float]:
        if self._it is None:
            self.reset()
        try:
            v, w = next(self._it)
        except StopIteration as e:
            raise IOError("command stream exhausted") from e
        return float(v), float(w)


@dataclass
class TrajectorySample:
    t: float
    true_pose: tuple[float, float, float]
    est_pose: tuple[float, float, float]
    cmd_v: float
    cmd_w: float


@dataclass
class TrajectoryLog:
    planner_id: str
    scenario_id: str
    seed: int
    samples: list[TrajectorySample] = field(default_factory=list)
    events: list[tuple[float, str]] = field(default_factory=list)

    @property
    def terminal_event(self) -> Optional[tuple[float, str]]:
        for t, name in self.events:
            if name in TERMINAL_EVENTS:
                return (t, name)
        return None

    @property
    def succeeded(self) -> bool:
        term = self.terminal_event
        has_collision = any(name == EVENT_COLLISION for _, name in self.events)
        return term is not None and term[1] == EVENT_GOAL and not has_collision

    def to_lines(self) -> str:
        out = [json.dumps({"type": "header", "planner": self.planner_id,
                           "scenario": self.scenario_id, "seed": self.seed},
                          sort_keys=True)]
        for s in self.samples:
            out.append(json.dumps({
                "type": "sample", "t": s.t, "true": list(s.true_pose),
                "est": list(s.est_pose), "cmd": [s.cmd_v, s.cmd_w],
            }, sort_keys=True))
        for t, name in self.events:
            out.append(json.dumps({"type": "event", "t": t, "name": name},
                                  sort_keys=True))
        return "\n".join(out) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_lines())

    @classmethod
    def read(cls, path) -> "TrajectoryLog":
        log = None
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            d = json.loads(line)
            if d["type"] == "header":
                log = cls(d["planner"], d["scenario"], d["seed"])
            elif d["type"] == "sample":
                log.samples.append(TrajectorySample(
                    d["t"], tuple(d["true"]), tuple(d["est"]),
                    d["cmd"][0], d["cmd"][1]))
            elif d["type"] == "event":
                log.events.append((d["t"], d["name"]))
        if log is None:
            raise ValueError(f"no header record in {path}")
        return log


class EpisodeEngine:
    """Stepwise core of one episode: observe, apply a command, repeat.

    run_episode drives it with a planner's decide; the teleoperation service
    drives it from network commands. The engine owns the localizer state,
    waypoint bookkeeping, and the trajectory log.
    """

    def __init__(
        self,
        scenario: ScenarioSpec,
        localizer_cfg: Optional[UwbConfig] = None,
        noise_cfg: Optional[RangingNoiseModel] = None,
        seed: int = 0,
        sim: Optional[SimParams] = None,
        perception: Optional[PerceptionConfig] = None,
        planner_id: str = "planner",
    ):
        self.scenario = scenario
        self.localizer_cfg = localizer_cfg or UwbConfig()
        self.noise_cfg = noise_cfg or RangingNoiseModel(sigma=0.0)
        self.sim = sim or SimParams()
        self.pcfg = perception or PerceptionConfig(d_norm=scenario.map.diagonal)
        self.anchors = self.localizer_cfg.resolve_anchors(scenario)
        self.rng = np.random.default_rng(seed)
        self.log = TrajectoryLog(planner_id, scenario.name, seed)
        self.state = RobotState(*scenario.start, v=0.0, omega=0.0, t=0.0)
        self.localizer = RangeLocalizer(
            self.anchors, (self.state.x, self.state.y),
            self.localizer_cfg.sigma_m2, self.localizer_cfg.sigma_p2,
            self.localizer_cfg.update_period)
        self.waypoint = 0
        self.cmd = (0.0, 0.0)
        self.finished = False
        self.ranging: list[RangingRecord] = []
        self._next_tick = 1
        self._fix = self._uwb_tick((self.state.x, self.state.y), 0.0)
        self._advance_waypoints(0.0)

    def _uwb_tick(self, true_xy: tuple[float, float], t: float):
        obstacles = advance_obstacles(self.scenario.obstacles, t)
        ranges = simulate_ranges(self.anchors, true_xy, obstacles,
                                 self.noise_cfg, self.rng)
        self.ranging.append(RangingRecord(t, ranges, flags_for(ranges)))
        return self.localizer.tick(ranges)

    def est_pose(self) -> tuple[float, float, float]:
        # position from the UWB pipeline; heading from the (noise-free)
        # magnetometer model
        if self.localizer_cfg.perfect:
            return (self.state.x, self.state.y, self.state.theta)
        return (self._fix.x, self._fix.y, self.state.theta)

    def _advance_waypoints(self, t: float) -> bool:
        while self.waypoint < len(self.scenario.goals):
            ex, ey, _ = self.est_pose()
            gx, gy = self.scenario.goals[self.waypoint]
            if math.hypot(gx - ex, gy - ey) >= self.scenario.goal_radius:
                return False
            self.waypoint += 1
            if self.waypoint == len(self.scenario.goals):
                self.log.events.append((t, EVENT_GOAL))
                self.finished = True
                return True
            self.log.events.append((t, EVENT_WAYPOINT))
        return False

    def observe(self) -> PlannerInput:
        if self.finished:
            raise RuntimeError("episode already finished")
        obstacles = advance_obstacles(self.scenario.obstacles, self.state.t)
        scan = scan_lidar(self.scenario.map, obstacles, self.state,
                          self.sim.n_rays, self.pcfg.max_range)
        goal = self.scenario.goals[self.waypoint]
        obs = build_observation(scan, self.est_pose(), goal, self.pcfg)
        return PlannerInput(obs=obs, vec=obs.vector(self.pcfg),
                            est_pose=self.est_pose(), goal=goal,
                            cmd_v=self.cmd[0], cmd_w=self.cmd[1],
                            max_range=self.pcfg.max_range)

    def apply(self, v_norm: float, w_norm: float) -> list[tuple[float, str]]:
        """Run one control step under the clipped command; returns the events
        it produced."""
        if self.finished:
            raise RuntimeError("episode already finished")
        n_events = len(self.log.events)
        sim = self.sim
        self.cmd = (max(0.0, min(1.0, float(v_norm))) * sim.limits.v_max,
                    max(-1.0, min(1.0, float(w_norm))) * sim.limits.omega_max)
        t_before = self.state.t
        res = run_control_step(self.state, self.cmd, self.scenario, sim.dt,
                               sim.n_substeps, sim.robot_radius, sim.limits)

        # 10 Hz localizer ticks whose nominal times fall inside this window,
        # sampled at the first simulation step on/after each nominal time
        while True:
            t_nominal = self._next_tick * self.localizer_cfg.update_period
            if t_nominal > res.state.t + 1e-12:
                break
            j = max(1, math.ceil((t_nominal - t_before) / sim.dt - 1e-9))
            x, y, _ = pose_along_arc(self.state, self.cmd[0], self.cmd[1],
                                     j * sim.dt)
            self._fix = self._uwb_tick((x, y), t_nominal)
            self._next_tick += 1

        self.state = res.state
        self.log.samples.append(TrajectorySample(
            t=self.state.t,
            true_pose=(self.state.x, self.state.y, self.state.theta),
            est_pose=self.est_pose(), cmd_v=self.cmd[0], cmd_w=self.cmd[1]))

        if res.collided:
            self.log.events.append((self.state.t, EVENT_COLLISION))
            self.finished = True
        elif not self._advance_waypoints(self.state.t) \
                and self.state.t > self.scenario.t_max:
            self.log.events.append((self.state.t, EVENT_TIMEOUT))
            self.finished = True
        return self.log.events[n_events:]

    def abort(self, t: Optional[float] = None) -> None:
        """Mark the episode aborted (driver loss); no terminal event is set."""
        if not self.finished:
            self.log.events.append((self.state.t if t is None else t,
                                    EVENT_ABORTED))
            self.finished = True


def run_episode(
    planner,
    scenario: ScenarioSpec,
    localizer_cfg: Optional[UwbConfig] = None,
    noise_cfg: Optional[RangingNoiseModel] = None,
    seed: int = 0,
    sim: Optional[SimParams] = None,
    perception: Optional[PerceptionConfig] = None,
    ranging_out: Optional[list] = None,
) -> TrajectoryLog:
    """One closed-loop episode; deterministic for a given (inputs, seed).

    ranging_out, if given, collects the raw RangingRecord stream for
    record/replay of the localizer input.
    """
    planner.reset()
    engine = EpisodeEngine(scenario, localizer_cfg, noise_cfg, seed, sim,
                           perception,
                           planner_id=getattr(planner, "planner_id", "planner"))
    while not engine.finished:
        inp = engine.observe()
        try:
            v_norm, w_norm = planner.decide(inp)
        except Exception as e:
            raise EpisodeAborted(f"planner failure: {e}", engine.log) from e
        engine.apply(v_norm, w_norm)
    if ranging_out is not None:
        ranging_out.extend(engine.ranging)
    return engine.log


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    success_rate: float
    collisions: float
    t_mean: Optional[float]
    v_rms_accel: float
    w_rms_accel: float
    runs: int


def compute_metrics(logs: list[TrajectoryLog]) -> MetricsReport:
    """Aggregate one planner's runs on one scenario.

    success_rate counts goal_reached terminals with no collision; t_mean is
    over successful runs only (absent when there are none); RMS accelerations
    come from finite differences of the commanded velocities at the control
    period, pooled across all runs.
    """
    if not logs:
        raise ValueError("no logs given")
    scenario_ids = {log.scenario_id for log in logs}
    if len(scenario_ids) != 1:
        raise ValueError(f"mixed scenarios in metrics input: {sorted(scenario_ids)}")
    successes = [log for log in logs if log.succeeded]
    collisions = [sum(1 for _, n in log.events if n == EVENT_COLLISION)
                  for log in logs]
    dv2, dw2 = [], []
    for log in logs:
        for a, b in zip(log.samples, log.samples[1:]):
            dt = b.t - a.t
            if dt <= 0:
                continue
            dv2.append(((b.cmd_v - a.cmd_v) / dt) ** 2)
            dw2.append(((b.cmd_w - a.cmd_w) / dt) ** 2)
    t_mean = (sum(log.terminal_event[0] for log in successes) / len(successes)
              if successes else None)
    return MetricsReport(
        success_rate=len(successes) / len(logs),
        collisions=float(np.mean(collisions)),
        t_mean=t_mean,
        v_rms_accel=float(np.sqrt(np.mean(dv2))) if dv2 else 0.0,
        w_rms_accel=float(np.sqrt(np.mean(dw2))) if dw2 else 0.0,
        runs=len(logs),
    )


_COLUMNS = ("success rate", "collisions", "t_mean [s]",
            "v_rms [m/s^2]", "w_rms [rad/s^2]")


@dataclass
class ComparisonTable:
    rows: list[tuple[str, MetricsReport]]

    def _cells(self, rep: MetricsReport) -> list[str]:
        # a fully failed configuration renders
        # "-" for time and smoothness, not misleading zeros
        if rep.success_rate == 0.0:
            tail = ["-", "-", "-"]
        else:
            tail = [f"{rep.t_mean:.1f}", f"{rep.v_rms_accel:.4f}",
                    f"{rep.w_rms_accel:.4f}"]
        return [f"{rep.success_rate:.2f}", f"{rep.collisions:.2f}"] + tail

    def text(self) -> str:
        header = ["planner"] + list(_COLUMNS)
        body = [[label] + self._cells(rep) for label, rep in self.rows]
        widths = [max(len(r[i]) for r in [header] + body)
                  for i in range(len(header))]
        def fmt(row):
            return "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()
        rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
        return "\n".join([fmt(header), rule] + [fmt(r) for r in body]) + "\n"

    def csv(self) -> str:
        out = ["planner,success_rate,collisions,t_mean,v_rms_accel,w_rms_accel"]
        for label, rep in self.rows:
            out.append(",".join([label] + self._cells(rep)))
        return "\n".join(out) + "\n"


def compare(reports: list[tuple[str, MetricsReport]]) -> ComparisonTable:
    if len(reports) < 2:
        raise ValueError("comparison needs at least 2 reports")
    return ComparisonTable(list(reports))


def throughput_bench(decide: Callable[[], object], n_calls: int = 10_000,
                     warmup: int = 200) -> float:
    """Wall-clock decisions per second for a prepared zero-argument decide
    callable, single-threaded."""
    for _ in range(warmup):
        decide()
    t0 = time.perf_counter()
    for _ in range(n_calls):
        decide()
    return n_calls / (time.perf_counter() - t0)


def export_plot_data(log: TrajectoryLog, path) -> None:
    """CSV of the true trajectory and the noisy UWB track for plotting."""
    lines = ["t,true_x,true_y,true_theta,est_x,est_y,cmd_v,cmd_w"]
    for s in log.samples:
        lines.append(f"{s.t},{s.true_pose[0]},{s.true_pose[1]},{s.true_pose[2]},"
                     f"{s.est_pose[0]},{s.est_pose[1]},{s.cmd_v},{s.cmd_w}")
    Path(path).write_text("\n".join(lines) + "\n")
