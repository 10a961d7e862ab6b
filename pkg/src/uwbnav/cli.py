"""Command-line entry point: train, evaluate, benchmark, replay, serve.

Configuration layering, in order of precedence: built-in defaults, then the
--config JSON file, then command-line flags. The fully resolved configuration
is written into the run directory before anything starts.

Exit codes: 0 ok, 1 configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import nets
from .ddpg import DdpgConfig, load_checkpoint, train
from .dwa import DwaConfig
from .harness import (
    DwaPlanner, EpisodeAborted, RlPlanner, UwbConfig, compare, compute_metrics,
    export_plot_data, run_episode, throughput_bench, ExternalPlanner,
    TrajectoryLog,
)
from .perception import PerceptionConfig
from .scenario import resolve_scenario
from .simcore import ObstacleScript, ScenarioSpec, SimParams
from .uwb import RangingNoiseModel, write_ranging_log


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "runs"
    scenario: str = "train_arena"
    planner: str = "rl"
    actor: Optional[str] = None
    episodes: int = 3000
    runs: int = 11
    noise_sigma: list = field(default_factory=lambda: [0.0])
    port: int = 8765
    curriculum: str = "fixed"          # fixed | obstacles
    checkpoint_every: int = 200
    resume: Optional[str] = None
    time_scale: float = 1.0
    session_name: str = "main"
    d_norm: Optional[float] = None
    ddpg: DdpgConfig = field(default_factory=DdpgConfig)
    dwa: DwaConfig = field(default_factory=DwaConfig)
    sim: SimParams = field(default_factory=SimParams)
    uwb: UwbConfig = field(default_factory=UwbConfig)
    perception: PerceptionConfig = field(default_factory=PerceptionConfig)

    def to_json(self) -> str:
        def enc(obj):
            if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
                return dataclasses.asdict(obj)
            raise TypeError(f"cannot serialize {type(obj)}")
        d = dataclasses.asdict(self)
        d["uwb"].pop("anchors", None)  # anchors come from the scenario file
        return json.dumps(d, indent=2, sort_keys=True, default=enc)


_SUBCONFIGS = {
    "ddpg": DdpgConfig, "dwa": DwaConfig, "sim": SimParams,
    "perception": PerceptionConfig,
}


def _apply_dict(cfg: RunConfig, data: dict, source: str) -> None:
    for key, value in data.items():
        if key in _SUBCONFIGS:
            if not isinstance(value, dict):
                raise ConfigError(f"{source}: {key} must be an object")
            sub = getattr(cfg, key)
            valid = {f.name for f in dataclasses.fields(sub)}
            for k, v in value.items():
                if k not in valid:
                    raise ConfigError(f"{source}: unknown key {key}.{k}")
                setattr(sub, k, v)
        elif key == "uwb":
            for k, v in value.items():
                if k not in ("sigma_m2", "sigma_p2", "update_period", "perfect"):
                    raise ConfigError(f"{source}: unknown key uwb.{k}")
                setattr(cfg.uwb, k, v)
        elif hasattr(cfg, key):
            setattr(cfg, key, value)
        else:
            raise ConfigError(f"{source}: unknown key {key}")


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path}: {e}") from e
        _apply_dict(cfg, data, str(path))
    for name in ("seed", "out", "scenario", "planner", "actor", "episodes",
                 "runs", "port", "curriculum", "resume", "time_scale",
                 "session_name", "d_norm"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if getattr(args, "noise_sigma", None) is not None:
        try:
            cfg.noise_sigma = [float(s) for s in args.noise_sigma.split(",")]
        except ValueError as e:
            raise ConfigError(f"--noise-sigma: {e}") from e
    cfg.ddpg.validate()
    return cfg


def make_run_dir(cfg: RunConfig, command: str) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = Path(cfg.out)
    run_dir = base / f"{command}-{stamp}"
    n = 0
    while run_dir.exists():
        n += 1
        run_dir = base / f"{command}-{stamp}-{n}"
    run_dir.mkdir(parents=True)
    (run_dir / "config.json").write_text(cfg.to_json() + "\n")
    return run_dir


def _perception_for(cfg: RunConfig, scenario: ScenarioSpec) -> PerceptionConfig:
    pcfg = dataclasses.replace(cfg.perception)
    if cfg.d_norm is not None:
        pcfg.d_norm = cfg.d_norm
    else:
        pcfg.d_norm = scenario.map.diagonal
    return pcfg


def _curriculum_sampler(base: ScenarioSpec, kind: str):
    """Training scenario per episode; "obstacles" mixes in random crossing
    panels on half the episodes for obstacle-avoidance exposure."""
    if kind == "fixed":
        return base
    if kind != "obstacles":
        raise ConfigError(f"unknown curriculum {kind!r}")
    xmin, ymin, xmax, ymax = base.map.bounds

    def sampler(episode: int, rng: np.random.Generator) -> ScenarioSpec:
        if rng.random() < 0.5:
            return base
        n = int(rng.integers(1, 3))
        scripts = list(base.obstacles)
        for _ in range(n):
            half = rng.uniform(0.25, 0.5)
            vertical = rng.random() < 0.5
            shape = [[0.0, -half, 0.0, half]] if vertical \
                else [[-half, 0.0, half, 0.0]]
            x0 = rng.uniform(xmin + 0.8, xmax - 0.8)
            y0 = rng.uniform(ymin + 0.8, ymax - 0.8)
            x1 = rng.uniform(xmin + 0.8, xmax - 0.8)
            y1 = rng.uniform(ymin + 0.8, ymax - 0.8)
            t0 = rng.uniform(0.0, 8.0)
            t1 = t0 + rng.uniform(6.0, 20.0)
            scripts.append(ObstacleScript(
                np.array(shape), [(t0, x0, y0), (t1, x1, y1)], "panel"))
        return dataclasses.replace(base, obstacles=scripts)

    return sampler


def cmd_train(cfg: RunConfig) -> int:
    parsed = resolve_scenario(cfg.scenario)
    run_dir = make_run_dir(cfg, "train")
    pcfg = _perception_for(cfg, parsed.spec)
    sampler = _curriculum_sampler(parsed.spec, cfg.curriculum)
    agent = None
    start_episode = 0
    if cfg.resume:
        agent, start_episode = load_checkpoint(cfg.resume)
        print(f"resuming from {cfg.resume} at episode {start_episode}")
    log_path = run_dir / "training_log.jsonl"

    def progress(rec):
        with open(log_path, "a") as f:
            f.write(rec.to_json() + "\n")
        if rec.episode % 25 == 0:
            print(f"episode {rec.episode}: outcome={rec.outcome} "
                  f"return={rec.ret:.1f} eps={rec.epsilon:.3f}", flush=True)

    actor, log = train(
        sampler, cfg.ddpg, seed=cfg.seed, episodes=cfg.episodes,
        perception=pcfg, sim=cfg.sim, checkpoint_dir=run_dir / "checkpoint",
        checkpoint_every=cfg.checkpoint_every, start_episode=start_episode,
        agent=agent, progress=progress)
    nets.save_net(actor, run_dir / "actor.net")
    (run_dir / "actor.net.json").write_text(json.dumps(
        dataclasses.asdict(pcfg), indent=2, sort_keys=True) + "\n")
    print(f"trained {len(log.records)} episodes; "
          f"success rate (last 100): {log.success_rate(100):.2f}")
    print(f"outputs in {run_dir}")
    return 0


def load_rl_planner(cfg: RunConfig, scenario: ScenarioSpec) -> tuple[RlPlanner, PerceptionConfig]:
    if not cfg.actor:
        raise ConfigError("planner 'rl' needs --actor <checkpoint>")
    path = Path(cfg.actor)
    if not path.exists():
        raise ConfigError(f"actor checkpoint not found: {path}")
    actor = nets.load_net(path, expect="actor")
    sidecar = path.with_suffix(path.suffix + ".json")
    if sidecar.exists():
        pcfg = PerceptionConfig(**json.loads(sidecar.read_text()))
    else:
        pcfg = _perception_for(cfg, scenario)
    return RlPlanner(actor), pcfg


def cmd_eval(cfg: RunConfig) -> int:
    parsed = resolve_scenario(cfg.scenario)
    scenario = parsed.spec
    run_dir = make_run_dir(cfg, "eval")
    planner_names = [p.strip() for p in cfg.planner.split(",") if p.strip()]
    rows = []
    uwb = dataclasses.replace(cfg.uwb, anchors=parsed.anchors)
    for name in planner_names:
        if name == "rl":
            planner, pcfg = load_rl_planner(cfg, scenario)
        elif name == "dwa":
            planner, pcfg = DwaPlanner(cfg.dwa), _perception_for(cfg, scenario)
        else:
            raise ConfigError(f"unknown planner {name!r} (expected rl, dwa)")
        for sigma in cfg.noise_sigma:
            noise = RangingNoiseModel(sigma=sigma)
            logs = []
            for i in range(cfg.runs):
                ranging = [] if i == 0 else None
                log = run_episode(planner, scenario, uwb, noise,
                                  seed=cfg.seed + i, sim=cfg.sim,
                                  perception=pcfg, ranging_out=ranging)
                fname = f"{name}_sigma{sigma:g}_run{i:02d}.jsonl"
                log.write(run_dir / fname)
                if ranging:
                    write_ranging_log(
                        ranging, run_dir / f"{name}_sigma{sigma:g}_run00.rlog")
                logs.append(log)
            export_plot_data(logs[0], run_dir / f"{name}_sigma{sigma:g}_traj.csv")
            label = name if len(cfg.noise_sigma) == 1 else f"{name} s={sigma:g}"
            rows.append((label, compute_metrics(logs)))
    if len(rows) >= 2:
        table = compare(rows)
        print(table.text())
        (run_dir / "comparison.csv").write_text(table.csv())
        (run_dir / "comparison.txt").write_text(table.text())
    else:
        rep = rows[0][1]
        print(json.dumps(dataclasses.asdict(rep), indent=2, sort_keys=True))
        (run_dir / "metrics.json").write_text(
            json.dumps(dataclasses.asdict(rep), indent=2, sort_keys=True) + "\n")
    print(f"outputs in {run_dir}")
    return 0


def cmd_bench(cfg: RunConfig) -> int:
    parsed = resolve_scenario(cfg.scenario)
    scenario = parsed.spec
    pcfg = _perception_for(cfg, scenario)
    rng = np.random.default_rng(cfg.seed)
    if cfg.actor:
        actor = nets.load_net(cfg.actor, expect="actor")
    else:
        actor = nets.ActorNet.build(cfg.seed)
    # inference path runs in 32-bit; training stays 64-bit
    actor32 = actor.astype(np.float32)
    obs_batch = [rng.uniform(0, 1, size=62).astype(np.float32)
                 for _ in range(256)]
    idx = {"i": 0}

    def rl_decide():
        idx["i"] = (idx["i"] + 1) % len(obs_batch)
        return actor32.forward(obs_batch[idx["i"]])

    from .simcore import RobotState
    from .dwa import dwa_plan
    scans = [np.where(rng.random(60) < 0.4, rng.uniform(0.3, 3.4, 60),
                      pcfg.max_range) for _ in range(64)]
    goals = [tuple(rng.uniform(-3, 3, 2)) for _ in range(64)]

    def dwa_decide():
        idx["i"] = (idx["i"] + 1) % len(scans)
        return dwa_plan(RobotState(v=0.1), goals[idx["i"] % 64],
                        scans[idx["i"] % 64], cfg.dwa,
                        max_range=pcfg.max_range)

    rl_rate = throughput_bench(rl_decide, n_calls=10_000)
    dwa_rate = throughput_bench(dwa_decide, n_calls=10_000)
    print(f"rl:  {rl_rate:10.1f} decisions/s")
    print(f"dwa: {dwa_rate:10.1f} decisions/s")
    print(f"ratio rl/dwa: {rl_rate / dwa_rate:.1f}x")
    print(f"dwa candidates per decision: {cfg.dwa.candidate_count}")
    return 0


def cmd_replay(cfg: RunConfig, log_file: str) -> int:
    path = Path(log_file)
    if not path.exists():
        raise ConfigError(f"log file not found: {path}")
    if path.suffix == ".rlog":
        from .uwb import replay_ranging_log
        parsed = resolve_scenario(cfg.scenario)
        fixes = replay_ranging_log(path, parsed.anchors,
                                   parsed.spec.start[:2])
        out = path.with_suffix(".fixes.csv")
        lines = ["t,x,y,converged"] + [
            f"{f.t},{f.x},{f.y},{int(f.converged)}" for f in fixes]
        out.write_text("\n".join(lines) + "\n")
        print(f"replayed {len(fixes)} localizer ticks; fixes in {out}")
        return 0
    log = TrajectoryLog.read(path)
    parsed = resolve_scenario(log.scenario_id)
    commands = [(s.cmd_v / cfg.sim.limits.v_max, s.cmd_w / cfg.sim.limits.omega_max)
                for s in log.samples]
    planner = ExternalPlanner(commands, planner_id=f"replay:{log.planner_id}")
    uwb = dataclasses.replace(cfg.uwb, anchors=parsed.anchors)
    try:
        new = run_episode(planner, parsed.spec, uwb,
                          RangingNoiseModel(sigma=0.0), seed=log.seed,
                          sim=cfg.sim)
    except EpisodeAborted as e:
        new = e.partial_log
    drift = 0.0
    for a, b in zip(log.samples, new.samples):
        drift = max(drift, abs(a.true_pose[0] - b.true_pose[0])
                    + abs(a.true_pose[1] - b.true_pose[1]))
    out = path.with_suffix(".replay.csv")
    export_plot_data(new, out)
    print(f"replayed {len(new.samples)} steps; max true-pose drift {drift:.4f} m")
    print(f"plot data written to {out}")
    return 0


def cmd_serve(cfg: RunConfig) -> int:
    import asyncio
    from .teleop import TeleopServer, TeleopSettings
    parsed = resolve_scenario(cfg.scenario)
    run_dir = make_run_dir(cfg, "serve")
    settings = TeleopSettings(
        scenario=parsed.spec, anchors=parsed.anchors,
        noise=RangingNoiseModel(sigma=cfg.noise_sigma[0]),
        uwb=cfg.uwb, sim=cfg.sim,
        perception=_perception_for(cfg, parsed.spec),
        time_scale=cfg.time_scale, out_dir=run_dir, seed=cfg.seed)
    server = TeleopServer(settings)
    print(f"teleop server on ws://localhost:{cfg.port}/session/<id>; "
          f"logs in {run_dir}")
    try:
        asyncio.run(server.serve_forever(cfg.port))
    except KeyboardInterrupt:
        print("interrupted")
    return 0


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="uwbnav",
        description="Indoor navigation lab: DDPG local planner with simulated "
                    "UWB localization, DWA baseline, and teleoperation.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--scenario", help="bundled scenario name or file path")
        p.add_argument("--out", help="output directory root")

    p = sub.add_parser("train", help="train the DDPG planner")
    common(p)
    p.add_argument("--episodes", type=int)
    p.add_argument("--curriculum", choices=("fixed", "obstacles"))
    p.add_argument("--resume", help="checkpoint directory to continue from")
    p.add_argument("--d-norm", dest="d_norm", type=float)

    p = sub.add_parser("eval", help="evaluate planners on a scenario")
    common(p)
    p.add_argument("--planner", help="comma list: rl,dwa")
    p.add_argument("--actor", help="actor checkpoint for planner=rl")
    p.add_argument("--runs", type=int)
    p.add_argument("--noise-sigma", help="comma list of range-noise sigmas [m]")
    p.add_argument("--d-norm", dest="d_norm", type=float)

    p = sub.add_parser("bench", help="planner throughput benchmark")
    common(p)
    p.add_argument("--actor")

    p = sub.add_parser("replay", help="re-drive a recorded trajectory log")
    common(p)
    p.add_argument("log_file")

    p = sub.add_parser("serve", help="run the teleoperation service")
    common(p)
    p.add_argument("--port", type=int)
    p.add_argument("--noise-sigma", help="range-noise sigma [m]")
    p.add_argument("--time-scale", dest="time_scale", type=float,
                   help="sim speed multiplier (1 = real time)")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = build_config(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    try:
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "bench":
            return cmd_bench(cfg)
        if args.command == "replay":
            return cmd_replay(cfg, args.log_file)
        if args.command == "serve":
            return cmd_serve(cfg)
        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"runtime failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
