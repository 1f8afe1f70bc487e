"""Train one expert per seed on each environment, then record demos from the best one.

    python3 scripts/run_experts.py --out runs/experts --seeds 0 1 2 3 4
"""

import argparse
import time
from pathlib import Path

from pifo.pipeline import evaluate_policy, record_demos, train_expert
from pifo.pipeline.agents import policy_from_params
from pifo.nn.checkpoint import load_checkpoint
from pifo.rl.config import TrainConfig

ENVS = ("cartpole-balance", "point-mass")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/experts"))
    ap.add_argument("--envs", nargs="+", default=list(ENVS))
    ap.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2, 3, 4])
    ap.add_argument("--iterations", type=int, default=300)
    ap.add_argument("--num-demos", type=int, default=10)
    args = ap.parse_args(argv)

    for env in args.envs:
        best = None
        for seed in args.seeds:
            cfg = TrainConfig(iterations=args.iterations, eval_every=10, checkpoint_every=args.iterations,
                              seed=seed, label=f"expert-{env}")
            t0 = time.perf_counter()
            rec = train_expert(env, cfg, run_dir=args.out / f"{env}_seed{seed}")
            ck = rec.best_path
            res = evaluate_policy(policy_from_params(load_checkpoint(ck), env), env, 20, 1000 + seed)
            extra = f"  end distance {res.final_goal_distances().mean():.3f}" if env == "point-mass" else ""
            print(f"{env} seed {seed}: return {res.mean_return:.1f}{extra}  "
                  f"{(time.perf_counter() - t0) / 60:.1f} min", flush=True)
            if best is None or res.mean_return > best[0]:
                best = (res.mean_return, ck)
        demos = record_demos(best[1], env, args.num_demos, True, 12345, args.out / f"{env}.demo")
        print(f"{env}: {args.num_demos} demos from {best[1]}, lengths {[len(t) for t in demos.trajectories]}")


if __name__ == "__main__":
    main()
