"""Training hyperparameters and their flat ``key=value`` text form."""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, fields, replace

from ..errors import ConfigError


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    entropy_coef: float = 0.01
    policy_lr: float = 3e-4
    value_lr: float = 3e-4
    disc_lr: float = 1e-4
    rollout_steps: int = 2048
    minibatch: int = 64
    ppo_epochs: int = 10
    iterations: int = 500
    seed: int = 0
    # discriminator schedule, one update call per iteration
    disc_minibatch: int = 64
    disc_epochs: int = 3
    # parallel environment instances sharing the rollout budget
    num_envs: int = 1
    eval_every: int = 10
    eval_episodes: int = 10
    checkpoint_every: int = 50
    # 0 keeps metrics.csv byte-reproducible (wall_clock_s written as 0; timing.csv has real times)
    record_wall_clock: int = 0
    label: str = ""

    def __post_init__(self):
        checks = [
            ("gamma", 0.0 < self.gamma <= 1.0, "in (0, 1]"),
            ("gae_lambda", 0.0 <= self.gae_lambda <= 1.0, "in [0, 1]"),
            ("clip_ratio", self.clip_ratio > 0.0, "> 0"),
            ("entropy_coef", self.entropy_coef >= 0.0 and math.isfinite(self.entropy_coef), ">= 0"),
            ("policy_lr", self.policy_lr > 0.0, "> 0"),
            ("value_lr", self.value_lr > 0.0, "> 0"),
            ("disc_lr", self.disc_lr > 0.0, "> 0"),
            ("rollout_steps", self.rollout_steps >= 1, ">= 1"),
            ("minibatch", self.minibatch >= 1, ">= 1"),
            ("ppo_epochs", self.ppo_epochs >= 0, ">= 0"),
            ("iterations", self.iterations >= 0, ">= 0"),
            ("seed", self.seed >= 0, ">= 0"),
            ("disc_minibatch", self.disc_minibatch >= 1, ">= 1"),
            ("disc_epochs", self.disc_epochs >= 0, ">= 0"),
            ("num_envs", self.num_envs >= 1, ">= 1"),
            ("eval_every", self.eval_every >= 1, ">= 1"),
            ("eval_episodes", self.eval_episodes >= 2, ">= 2"),
            ("checkpoint_every", self.checkpoint_every >= 1, ">= 1"),
            ("record_wall_clock", self.record_wall_clock in (0, 1), "0 or 1"),
        ]
        for name, ok, rule in checks:
            if not ok:
                raise ConfigError(f"{name}={getattr(self, name)!r} must be {rule}")
        if self.rollout_steps % self.num_envs:
            raise ConfigError(f"rollout_steps={self.rollout_steps} must be divisible by "
                              f"num_envs={self.num_envs}")
        if any(ch in self.label for ch in "\n=#,"):
            raise ConfigError("label may not contain '=', '#', ',' or newlines")

    def with_overrides(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _format(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def config_to_text(cfg: TrainConfig) -> str:
    return "".join(f"{k}={_format(v)}\n" for k, v in asdict(cfg).items())


def parse_overrides(text: str, source: str = "<config>") -> dict:
    """Parse ``key=value`` lines into typed overrides; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        kind = _TYPES[key]
        try:
            if kind in ("int", int):
                out[key] = int(value)
            elif kind in ("float", float):
                out[key] = float(value)
            else:
                out[key] = value
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad value {value!r} for {key}") from None
    return out


def config_from_text(text: str, base: TrainConfig | None = None, source: str = "<config>") -> TrainConfig:
    return replace(base or TrainConfig(), **parse_overrides(text, source))


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    path = os.fspath(path)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return config_from_text(text, base, source=path)


def save_config(cfg: TrainConfig, path) -> None:
    with open(os.fspath(path), "w") as fh:
        fh.write(config_to_text(cfg))
