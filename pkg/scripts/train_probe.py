"""Desk-scale training probe: empty arena, default config, early stop on the
moving-average success criterion. Writes progress so runs can be watched."""
import argparse
import sys
import time

from uwbnav.ddpg import DdpgConfig, train
from uwbnav.scenario import load_bundled_scenario


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--episodes", type=int, default=3000)
    ap.add_argument("--out", default=None)
    ap.add_argument("--delta-mode", default=None)
    args = ap.parse_args()

    scen = load_bundled_scenario("train_arena").spec
    cfg = DdpgConfig() if args.delta_mode is None \
        else DdpgConfig(delta_d_mode=args.delta_mode)
    t0 = time.perf_counter()

    def prog(r):
        if r.episode % 25 == 0 or r.episode < 3:
            el = time.perf_counter() - t0
            print(f"ep {r.episode:4d} eps={r.epsilon:.3f} steps={r.steps:4d} "
                  f"ret={r.ret:9.1f} outcome={r.outcome:9s} loss={r.critic_loss:10.2f} "
                  f"q={r.mean_q:9.2f} [{el:7.1f}s]", flush=True)

    def stop(log):
        n = len(log.records)
        if n % 25 == 0:
            sr = log.success_rate(100)
            print(f"  -> ep {n}: success MA100 = {sr:.2f}", flush=True)
        return n >= 100 and log.success_rate(100) >= 0.8

    actor, log = train(scen, cfg, seed=args.seed, episodes=args.episodes,
                       stop_fn=stop, progress=prog)
    sr = log.success_rate(100)
    print(f"DONE seed={args.seed} episodes={len(log.records)} "
          f"final MA100={sr:.2f} elapsed={time.perf_counter()-t0:.0f}s", flush=True)
    if args.out:
        from uwbnav import nets
        nets.save_net(actor, args.out)
        log.write(args.out + ".log.jsonl")
    return 0 if sr >= 0.8 else 1


if __name__ == "__main__":
    sys.exit(main())
