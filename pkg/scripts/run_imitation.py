"""Imitation sweep over observation modes and seeds, followed by a report.

    python3 scripts/run_imitation.py --env cartpole-balance \
        --demos runs/experts/cartpole-balance.demo \
        --expert runs/experts/cartpole-balance_seed0/checkpoints/best.pifo \
        --out runs/imitation --modes proprio vision --seeds 0 1 2 3 4
"""

import argparse
from pathlib import Path

from pifo.envs.demo_io import read_demos
from pifo.nn.checkpoint import load_checkpoint
from pifo.pipeline import evaluate_policy, imitate
from pifo.pipeline.agents import policy_from_params
from pifo.report import emit_report
from pifo.rl.config import TrainConfig, load_config


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--env", required=True)
    ap.add_argument("--demos", type=Path, required=True)
    ap.add_argument("--expert", type=Path, required=True, help="expert checkpoint, for normalized scores")
    ap.add_argument("--out", type=Path, default=Path("runs/imitation"))
    ap.add_argument("--modes", nargs="+", default=["proprio", "vision"])
    ap.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2, 3, 4])
    ap.add_argument("--config", type=Path, help="key=value file applied over the defaults")
    ap.add_argument("--iterations", type=int)
    args = ap.parse_args(argv)

    base = load_config(args.config) if args.config else TrainConfig(eval_every=5)
    if args.iterations is not None:
        base = base.with_overrides(iterations=args.iterations)
    demos = read_demos(args.demos)
    expert = policy_from_params(load_checkpoint(args.expert), args.env)
    run_dirs = []
    for mode in args.modes:
        for seed in args.seeds:
            cfg = base.with_overrides(seed=seed, label=mode)
            r_expert = evaluate_policy(expert, args.env, cfg.eval_episodes, seed).mean_return
            run = args.out / f"{args.env}_{mode}_seed{seed}"
            rec = imitate(demos, args.env, mode, cfg, run_dir=run, expert_return=r_expert)
            last = rec.rows[-1] if rec.rows else None
            score = f"{last.normalized_score:.3f}" if last else "n/a"
            print(f"{mode} seed {seed}: final normalized score {score}", flush=True)
            run_dirs.append(run)
    for path in emit_report(run_dirs, args.out / "report"):
        print("wrote", path)


if __name__ == "__main__":
    main()
