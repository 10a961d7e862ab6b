"""Validates a training snapshot against the first-scenario acceptance gates:
success >= 0.8 with zero collisions at sigma 0.05, and <= 0.2 degradation
across the 0 -> 0.1 noise sweep."""
import argparse
import sys
from pathlib import Path

from uwbnav import nets
from uwbnav.harness import RlPlanner, UwbConfig, compute_metrics, run_episode
from uwbnav.perception import PerceptionConfig
from uwbnav.scenario import load_bundled_scenario
from uwbnav.uwb import RangingNoiseModel


def evaluate(actor_path: Path, runs: int = 11) -> dict:
    actor = nets.load_net(actor_path, expect="actor")
    parsed = load_bundled_scenario("s1_ab")
    pcfg = PerceptionConfig(d_norm=parsed.spec.map.diagonal)
    uwb = UwbConfig(anchors=parsed.anchors)
    out = {}
    for sigma in (0.0, 0.05, 0.1):
        logs = [run_episode(RlPlanner(actor), parsed.spec, uwb,
                            RangingNoiseModel(sigma=sigma), seed=100 + i,
                            perception=pcfg) for i in range(runs)]
        rep = compute_metrics(logs)
        out[sigma] = (rep.success_rate, rep.collisions,
                      rep.t_mean and round(rep.t_mean, 1))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("paths", nargs="+")
    ap.add_argument("--runs", type=int, default=11)
    args = ap.parse_args()
    any_pass = False
    for p in args.paths:
        path = Path(p)
        if path.is_dir():
            path = path / "actor.net"
        res = evaluate(path, args.runs)
        sr, col, tm = res[0.05]
        degradation = res[0.0][0] - min(v[0] for v in res.values())
        ok = (sr >= 0.8 and col == 0.0
              and all(v[1] == 0.0 for v in res.values())
              and degradation <= 0.2)
        any_pass = any_pass or ok
        print(f"{'PASS' if ok else 'fail'} {p}: "
              + "  ".join(f"s{int(s*100):02d}%: sr={v[0]:.2f} col={v[1]:.2f} "
                          f"t={v[2]}" for s, v in res.items())
              + f"  degr={degradation:.2f}", flush=True)
    return 0 if any_pass else 1


if __name__ == "__main__":
    sys.exit(main())
