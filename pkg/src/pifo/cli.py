"""``pifo`` command line: train-expert, record-demos, imitate, evaluate, report.

Configuration precedence is defaults < ``--config`` file < flags. Every
failure exits nonzero with a single ``pifo: error: ...`` line on stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field

from .envs.core import ENV_SPECS
from .errors import PifoError
from .policy import KINDS

log = logging.getLogger("pifo")

EXIT_USAGE = 2
EXIT_FAILURE = 1


class CommandLineError(Exception):
    """Bad invocation; the message already names the offending flag."""


@dataclass
class Command:
    name: str
    options: dict = field(default_factory=dict)

    def __getattr__(self, key):
        try:
            return self.options[key]
        except KeyError:
            raise AttributeError(key) from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CommandLineError(message)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes"):
        return True
    if low in ("0", "false", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return value


def _positive(text: str) -> int:
    value = _seed(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pifo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, help_text):
        return sub.add_parser(name, help=help_text, description=help_text)

    p = add("train-expert", "PPO on the ground-truth reward")
    p.add_argument("--env", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=_seed, required=True)

    p = add("record-demos", "roll out an expert and store frames only")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--env", required=True)
    p.add_argument("--num-trajectories", type=_positive, required=True)
    p.add_argument("--deterministic", type=_bool, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=_seed, required=True)

    p = add("imitate", "adversarial imitation from video-only demonstrations")
    p.add_argument("--demos", required=True)
    p.add_argument("--env", required=True)
    p.add_argument("--mode", choices=KINDS, required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--expert-checkpoint",
                   help="optional; enables the normalized_score column during training")

    p = add("evaluate", "mean return, standard error and normalized score")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--expert-checkpoint", required=True)
    p.add_argument("--env", required=True)
    p.add_argument("--episodes", type=_positive, required=True)
    p.add_argument("--seed", type=_seed, required=True)

    p = add("report", "learning curves, final-score bars and a summary table")
    p.add_argument("--run-dirs", required=True, help="comma-separated run directories")
    p.add_argument("--out", required=True)
    return parser


def _check_readable(flag: str, path) -> None:
    if path is not None and not (os.path.isfile(path) and os.access(path, os.R_OK)):
        raise CommandLineError(f"{flag}: cannot read file {path!r}")


def parse_args(argv) -> Command:
    """Parse and validate; raises CommandLineError naming the bad flag."""
    ns = vars(build_parser().parse_args(list(argv)))
    name = ns.pop("command")
    opts = {k: v for k, v in ns.items()}
    if "env" in opts and opts["env"] not in ENV_SPECS:
        raise CommandLineError(f"--env: unknown environment {opts['env']!r} "
                               f"(choose from {', '.join(sorted(ENV_SPECS))})")
    for flag in ("config", "demos", "checkpoint", "expert_checkpoint"):
        if flag in opts:
            _check_readable("--" + flag.replace("_", "-"), opts[flag])
    if name == "report":
        dirs = [d for d in opts["run_dirs"].split(",") if d]
        if not dirs:
            raise CommandLineError("--run-dirs: no directories given")
        for d in dirs:
            if not os.path.isfile(os.path.join(d, "metrics.csv")):
                raise CommandLineError(f"--run-dirs: {d!r} has no metrics.csv")
        opts["run_dirs"] = dirs
    return Command(name, opts)


def effective_config(cmd: Command):
    """Defaults, then the config file, then the ``--seed`` flag."""
    from .rl.config import TrainConfig, load_config

    cfg = TrainConfig()
    if cmd.options.get("config"):
        cfg = load_config(cmd.config, cfg)
    return cfg.with_overrides(seed=cmd.seed)


def run(cmd: Command) -> int:
    from .envs.demo_io import read_demos
    from .pipeline import evaluate, imitate, record_demos, train_expert
    from .pipeline.agents import policy_from_params
    from .pipeline.evaluate import evaluate_policy
    from .nn.checkpoint import load_checkpoint
    from .report import emit_report

    if cmd.name == "train-expert":
        cfg = effective_config(cmd)
        rec = train_expert(cmd.env, cfg, run_dir=cmd.out)
        print(f"best eval return {rec.best_score:.6g}; checkpoint {rec.best_path}")
    elif cmd.name == "record-demos":
        demos = record_demos(cmd.checkpoint, cmd.env, cmd.num_trajectories, cmd.deterministic,
                             cmd.seed, cmd.out)
        lengths = [len(t) for t in demos.trajectories]
        print(f"wrote {len(lengths)} trajectories ({sum(lengths)} frames) to {cmd.out}")
    elif cmd.name == "imitate":
        cfg = effective_config(cmd)
        demos = read_demos(cmd.demos)
        expert_return = None
        if cmd.expert_checkpoint:
            expert = policy_from_params(load_checkpoint(cmd.expert_checkpoint), cmd.env)
            expert_return = evaluate_policy(expert, cmd.env, cfg.eval_episodes, cfg.seed).mean_return
        rec = imitate(demos, cmd.env, cmd.mode, cfg, run_dir=cmd.out, expert_return=expert_return)
        print(f"finished {len(rec.rows)} iterations; checkpoint {rec.best_path}")
    elif cmd.name == "evaluate":
        ev = evaluate(cmd.checkpoint, cmd.env, cmd.episodes, cmd.expert_checkpoint, cmd.seed)
        print(f"mean_return={ev.mean_return:.17g} std_error={ev.std_error:.17g} "
              f"normalized_score={ev.normalized_score:.17g}")
    elif cmd.name == "report":
        paths = emit_report(cmd.run_dirs, cmd.out)
        print("wrote " + ", ".join(str(p) for p in paths))
    return 0


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split()) or type(exc).__name__


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="pifo: %(levelname)s: %(message)s")
    try:
        cmd = parse_args(sys.argv[1:] if argv is None else argv)
    except CommandLineError as exc:
        print(f"pifo: error: {_one_line(exc)}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return run(cmd)
    except (PifoError, ValueError, OSError) as exc:
        print(f"pifo: error: {_one_line(exc)}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
