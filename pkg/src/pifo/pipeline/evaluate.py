"""Policy evaluation and the expert/random normalized score."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from ..envs import core as envs
from ..envs.render import render_mask
from ..errors import EvaluationError, UsageError
from ..nn.checkpoint import load_checkpoint
from ..nn.tensor import no_grad
from ..policy import GaussianPolicy, sample_action
from ..rl.rollout import FrameHistory
from ..seeding import derive_seed
from .agents import checkpoint_meta, fresh_policy, policy_from_params


@dataclass
class EvalResult:
    returns: np.ndarray
    lengths: np.ndarray
    final_states: list

    @property
    def mean_return(self) -> float:
        return float(np.mean(self.returns))

    @property
    def std_error(self) -> float:
        n = len(self.returns)
        return float(np.std(self.returns, ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    @property
    def mean_length(self) -> float:
        return float(np.mean(self.lengths))

    def final_goal_distances(self) -> np.ndarray:
        return np.array([envs.goal_distance(s) for s in self.final_states])


def eval_seeds(seed: int, episodes: int) -> list[int]:
    return [derive_seed(seed, "eval-reset", i) for i in range(episodes)]


def run_episodes(policy: GaussianPolicy, env_id: str, seeds, deterministic: bool = True,
                 rng: np.random.Generator | None = None) -> EvalResult:
    """Play one full episode per reset seed, batching the policy over live episodes."""
    spec = envs.get_spec(env_id)
    if not deterministic and rng is None:
        raise UsageError("stochastic evaluation needs an rng")
    n = len(seeds)
    states = [envs.reset(spec, s) for s in seeds]
    vision = policy.kind == "vision"
    histories = [FrameHistory(render_mask(spec, s).astype(np.uint8)) for s in states] if vision else None
    returns = np.zeros(n)
    lengths = np.zeros(n, dtype=int)
    live = list(range(n))
    while live:
        if vision:
            obs = np.stack([histories[i].stack() for i in live]).astype(np.float64)
        else:
            obs = np.stack([states[i].vector() for i in live])
        with no_grad():
            mean, log_std = policy.forward(obs)
        if deterministic:
            actions = mean.data
        else:
            actions = np.stack([sample_action(m, log_std.data, rng) for m in mean.data])
        still = []
        for j, i in enumerate(live):
            res = envs.step(spec, states[i], actions[j])
            returns[i] += res.reward
            states[i] = res.next
            lengths[i] = res.next.step_index
            if not res.done:
                if vision:
                    histories[i].push(render_mask(spec, res.next).astype(np.uint8))
                still.append(i)
        live = still
    return EvalResult(returns, lengths, states)


def evaluate_policy(policy: GaussianPolicy, env_id: str, episodes: int, seed: int) -> EvalResult:
    """Deterministic (mean-action) returns over ``episodes`` seeded resets."""
    if episodes < 2:
        raise EvaluationError(f"evaluation needs at least 2 episodes, got {episodes}")
    return run_episodes(policy, env_id, eval_seeds(seed, episodes), deterministic=True)


def normalized_score(R: float, R_random: float, R_expert: float) -> float:
    """Affine score with random -> 0.0 and expert -> 1.0; not clamped."""
    if R_expert == R_random:
        raise EvaluationError(f"degenerate baseline: expert and random returns both {R_expert}")
    return (R - R_random) / (R_expert - R_random)


@dataclass
class Evaluation:
    mean_return: float
    std_error: float
    normalized_score: float
    random_return: float
    expert_return: float


def evaluate(checkpoint, env_id: str, episodes: int, expert_checkpoint, seed: int) -> Evaluation:
    """Score a checkpoint against the expert and a freshly initialized policy.

    All three are rolled out with mean actions on the same ``episodes`` resets;
    the fresh policy uses the same seed derivation as training, so a run's
    untrained checkpoint scores exactly 0.
    """
    params = load_checkpoint(checkpoint) if isinstance(checkpoint, (str, os.PathLike)) else checkpoint
    expert_params = (load_checkpoint(expert_checkpoint)
                     if isinstance(expert_checkpoint, (str, os.PathLike)) else expert_checkpoint)
    policy = policy_from_params(params, env_id)
    expert = policy_from_params(expert_params, env_id)
    _, kind = checkpoint_meta(params)
    random_policy = fresh_policy(env_id, kind or policy.kind, seed)
    result = evaluate_policy(policy, env_id, episodes, seed)
    r_expert = evaluate_policy(expert, env_id, episodes, seed).mean_return
    r_random = evaluate_policy(random_policy, env_id, episodes, seed).mean_return
    return Evaluation(result.mean_return, result.std_error,
                      normalized_score(result.mean_return, r_random, r_expert), r_random, r_expert)
