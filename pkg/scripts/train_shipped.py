"""Trains the shipped actor checkpoint on the evaluation-scale room: a
goal-distance curriculum densifies the success signal early (nearby goals
first, the full room by ~episode 250), and the mixed obstacle curriculum
teaches moving-panel avoidance. Freezes the asset used by the evaluation
acceptance runs."""
import argparse
import dataclasses
import json
import math
import sys
import time
from pathlib import Path

from uwbnav import nets

from uwbnav.ddpg import DdpgConfig, train
from uwbnav.perception import PerceptionConfig
from uwbnav.scenario import load_bundled_scenario
from uwbnav.simcore import sample_free_point

ASSETS = Path(__file__).resolve().parent.parent / "src" / "uwbnav" / "assets"


def make_curriculum(base, cap0=1.2, grow=0.02):
    """Coordinated scenario/goal samplers for the shipped policy.

    Goals follow a distance curriculum (nearby first, the whole room by
    ~episode 250). Once goals are far enough, most episodes drop a panel
    that slides in and parks across the start-goal line as the robot
    approaches; some keep wandering panels; the rest stay empty.
    """
    import numpy as np
    from uwbnav.simcore import ObstacleScript

    start = base.start[:2]
    chosen: dict[int, tuple[float, float]] = {}

    def pick_goal(episode, rng):
        cap = cap0 + grow * episode
        x = y = None
        for _ in range(200):
            x, y = sample_free_point(base, rng, margin=0.5)
            if math.hypot(x - start[0], y - start[1]) <= cap:
                break
        return (x, y)

    def blocking_panel(goal, rng):
        d = math.hypot(goal[0] - start[0], goal[1] - start[1])
        frac = rng.uniform(0.35, 0.75)
        bx = start[0] + frac * (goal[0] - start[0])
        by = start[1] + frac * (goal[1] - start[1])
        ux, uy = (goal[0] - start[0]) / d, (goal[1] - start[1]) / d
        px, py = -uy, ux  # path normal
        half = rng.uniform(0.35, 0.6)
        shape = np.array([[-px * half, -py * half, px * half, py * half]])
        side = 1.0 if rng.random() < 0.5 else -1.0
        off = rng.uniform(1.2, 2.2)
        sx, sy = bx + side * px * off, by + side * py * off
        # park on the line roughly when the robot gets within ~1 m of it
        arrive = max(2.0, frac * d / 0.13 - rng.uniform(5.0, 10.0))
        return ObstacleScript(shape, [(max(0.5, arrive - 3.0), sx, sy),
                                      (arrive, bx, by)], "blocker")

    def wandering_panel(rng):
        xmin, ymin, xmax, ymax = base.map.bounds
        half = rng.uniform(0.25, 0.5)
        shape = np.array([[0.0, -half, 0.0, half]]) if rng.random() < 0.5 \
            else np.array([[-half, 0.0, half, 0.0]])
        pts = [(rng.uniform(0, 8),
                rng.uniform(xmin + 0.8, xmax - 0.8),
                rng.uniform(ymin + 0.8, ymax - 0.8))]
        t = pts[0][0]
        for _ in range(2):
            t += rng.uniform(8.0, 20.0)
            pts.append((t, rng.uniform(xmin + 0.8, xmax - 0.8),
                        rng.uniform(ymin + 0.8, ymax - 0.8)))
        return ObstacleScript(shape, pts, "walker")

    def scenario_sampler(episode, rng):
        goal = pick_goal(episode, rng)
        chosen[episode] = goal
        d = math.hypot(goal[0] - start[0], goal[1] - start[1])
        r = rng.random()
        obstacles = []
        if d >= 1.5 and r < 0.55:
            obstacles = [blocking_panel(goal, rng)]
        elif r < 0.8:
            obstacles = [wandering_panel(rng)
                         for _ in range(int(rng.integers(1, 3)))]
        return dataclasses.replace(base, obstacles=obstacles)

    def goal_sampler(episode, scenario, rng):
        return chosen.pop(episode)

    return scenario_sampler, goal_sampler


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--episodes", type=int, default=3000)
    ap.add_argument("--scenario", default="train_room")
    ap.add_argument("--stop-at", type=float, default=0.9)
    ap.add_argument("--min-episodes", type=int, default=1100)
    ap.add_argument("--checkpoint-dir", default=None)
    ap.add_argument("--checkpoint-every", type=int, default=0)
    ap.add_argument("--stream-log", default=None)
    ap.add_argument("--out", default=str(ASSETS / "actor_pretrained.net"))
    args = ap.parse_args()

    scen = load_bundled_scenario(args.scenario).spec
    pcfg = PerceptionConfig(d_norm=scen.map.diagonal)
    sampler, goal_sampler = make_curriculum(scen)
    cfg = DdpgConfig()
    t0 = time.perf_counter()

    def prog(r):
        if args.stream_log:
            with open(args.stream_log, "a") as f:
                f.write(r.to_json() + "\n")
        if r.episode % 25 == 0:
            print(f"ep {r.episode:4d} eps={r.epsilon:.3f} steps={r.steps:4d} "
                  f"ret={r.ret:9.1f} outcome={r.outcome:9s} "
                  f"[{time.perf_counter()-t0:7.1f}s]", flush=True)

    def stop(log):
        n = len(log.records)
        if n % 50 == 0:
            print(f"  -> ep {n}: success MA100 = {log.success_rate(100):.2f}",
                  flush=True)
        if args.checkpoint_dir and args.checkpoint_every \
                and n % args.checkpoint_every == 0:
            # keep each periodic checkpoint; train() refreshes a flat copy
            import shutil
            snap = Path(args.checkpoint_dir).parent / f"snap_ep{n:05d}"
            if not snap.exists():
                shutil.copytree(args.checkpoint_dir, snap)
        return n >= args.min_episodes and log.success_rate(100) >= args.stop_at

    actor, log = train(sampler, cfg, seed=args.seed, episodes=args.episodes,
                       perception=pcfg, stop_fn=stop, progress=prog,
                       goal_sampler=goal_sampler,
                       checkpoint_dir=args.checkpoint_dir,
                       checkpoint_every=args.checkpoint_every)
    sr = log.success_rate(100)
    print(f"DONE episodes={len(log.records)} MA100={sr:.2f} "
          f"elapsed={time.perf_counter()-t0:.0f}s")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    nets.save_net(actor, out)
    Path(str(out) + ".json").write_text(json.dumps(
        dataclasses.asdict(pcfg), indent=2, sort_keys=True) + "\n")
    log.write(out.with_suffix(".train_log.jsonl"))
    print(f"saved {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
