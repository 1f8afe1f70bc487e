"""Expert training on ground-truth reward and the adversarial imitation loop."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..discriminator import StackBatch, disc_update, reward_from_discriminator, segment_stack_indices
from ..envs.core import get_spec
from ..envs.demo_io import DemoSet
from ..errors import ConfigError, NonFiniteError
from ..nn.optim import AdamState
from ..policy import KINDS
from ..rl.config import TrainConfig
from ..rl.gae import compute_gae
from ..rl.ppo import ppo_update_batch
from ..rl.rollout import EnvEnsemble, RolloutBatch, collect_rollout
from ..seeding import rng_for
from .agents import bundle, fresh_discriminator, fresh_policy, fresh_value
from .evaluate import EvalResult, evaluate_policy, normalized_score
from .runs import MetricsRow, RunRecord, open_run

log = logging.getLogger(__name__)

StopFn = Callable[[MetricsRow, "EvalResult | None"], bool]


@dataclass
class _Trainable:
    """Parameters plus optimizer state that an aborted iteration rolls back."""

    pairs: list  # (ParamSet, AdamState)

    def snapshot(self):
        return [(p.copy(), o.copy()) for p, o in self.pairs]

    def restore(self, snap) -> None:
        for (p, o), (ps, os_) in zip(self.pairs, snap):
            p.assign(ps)
            o.m, o.v, o.step = os_.m, os_.v, os_.step


def _episode_summary(batch: RolloutBatch) -> tuple[float, float]:
    ep = batch.episodes
    if ep.returns:
        return float(np.mean(ep.returns)), float(np.mean(ep.lengths))
    # no episode finished inside this rollout: report the per-env partial return
    return float(batch.true_rewards.sum(axis=0).mean()), float(batch.num_steps)


def _should_eval(it: int, cfg: TrainConfig) -> bool:
    return it % cfg.eval_every == 0 or it == cfg.iterations


def train_expert(env_id: str, cfg: TrainConfig, run_dir=None,
                 stop_when: StopFn | None = None) -> RunRecord:
    """PPO on the environment's own reward; keeps the best deterministic-eval checkpoint.

    Discriminator columns and ``normalized_score`` are NaN in expert runs
    (there is no discriminator and no expert to normalize against).
    """
    get_spec(env_id)
    policy = fresh_policy(env_id, "proprio", cfg.seed)
    value = fresh_value(env_id, "proprio", cfg.seed)
    popt = AdamState.for_params(policy.params, cfg.policy_lr)
    vopt = AdamState.for_params(value.params, cfg.value_lr)
    state = _Trainable([(policy.params, popt), (value.params, vopt)])
    ensemble = EnvEnsemble(env_id, cfg.num_envs, cfg.seed, "proprio")
    record = open_run(run_dir, cfg)

    def current():
        return bundle(env_id, "proprio", policy.params.copy(), value.params.copy())

    init_eval = evaluate_policy(policy, env_id, cfg.eval_episodes, cfg.seed)
    record.best_params, record.best_score = current(), init_eval.mean_return
    record.eval_history.append((0, init_eval))
    nan = math.nan
    for it in range(1, cfg.iterations + 1):
        t0 = time.perf_counter()
        snap = state.snapshot()
        aborted = False
        try:
            batch = collect_rollout(policy, value, ensemble, cfg.rollout_steps, "ground_truth")
            adv = compute_gae(batch, cfg.gamma, cfg.gae_lambda)
            diag = ppo_update_batch(policy, value, batch, adv, cfg, popt, vopt,
                                    rng_for(cfg.seed, "ppo", it))
            ret, length = _episode_summary(batch)
        except NonFiniteError as exc:
            log.warning("iteration %d aborted: %s", it, exc)
            state.restore(snap)
            aborted = True
            ret = length = nan
        result = None
        if _should_eval(it, cfg):
            result = evaluate_policy(policy, env_id, cfg.eval_episodes, cfg.seed)
            record.eval_history.append((it, result))
            if result.mean_return > record.best_score:
                record.best_score = result.mean_return
                record.best_params = current()
        elapsed = time.perf_counter() - t0
        row = MetricsRow(it, elapsed if cfg.record_wall_clock else 0.0, nan, nan, nan,
                         nan if aborted else diag.policy_loss, nan if aborted else diag.value_loss,
                         nan if aborted else diag.entropy, nan if aborted else diag.clip_fraction,
                         ret, length, nan, aborted=aborted)
        record.append(row)
        record.log_time(it, elapsed)
        if it % cfg.checkpoint_every == 0:
            record.save(current(), f"iter_{it:06d}.pifo")
        if stop_when is not None and stop_when(row, result):
            break
    record.final_params = current()
    record.save(record.final_params, "final.pifo")
    record.save(record.best_params, "best.pifo")
    return record


def expert_stack_batch(demos: DemoSet) -> StackBatch:
    """All demo frames in one buffer with per-trajectory stack indices."""
    frames = np.concatenate(demos.trajectories)
    lengths = [len(t) for t in demos.trajectories]
    return StackBatch(frames, segment_stack_indices(lengths))


def imitate(demos: DemoSet, env_id: str, mode: str, cfg: TrainConfig, run_dir=None,
            expert_return: float | None = None, stop_when: StopFn | None = None) -> RunRecord:
    """Adversarial imitation from video-only demonstrations.

    Per iteration: roll out the policy and record frames; update the
    discriminator on imitator stacks vs. uniformly drawn expert stacks; fill
    rewards with ``-log D`` from the updated discriminator; GAE; PPO.
    ``mode='vision'`` feeds the policy frame stacks instead of the state.

    ``expert_return`` (the expert's deterministic evaluation return) is only
    used to report ``normalized_score``; without it that column is NaN.
    """
    if mode not in KINDS:
        raise ConfigError(f"mode must be one of {KINDS}, got {mode!r}")
    get_spec(env_id)
    if demos.env_id != env_id:
        raise ConfigError(f"demos were recorded on {demos.env_id!r}, not {env_id!r}")
    if cfg.rollout_steps < cfg.disc_minibatch:
        raise ConfigError(f"rollout_steps={cfg.rollout_steps} smaller than "
                          f"disc_minibatch={cfg.disc_minibatch}")
    policy = fresh_policy(env_id, mode, cfg.seed)
    value = fresh_value(env_id, mode, cfg.seed)
    disc = fresh_discriminator(cfg.seed)
    popt = AdamState.for_params(policy.params, cfg.policy_lr)
    vopt = AdamState.for_params(value.params, cfg.value_lr)
    dopt = AdamState.for_params(disc.params, cfg.disc_lr)
    state = _Trainable([(policy.params, popt), (value.params, vopt), (disc.params, dopt)])
    ensemble = EnvEnsemble(env_id, cfg.num_envs, cfg.seed, mode)
    expert = expert_stack_batch(demos)
    record = open_run(run_dir, cfg)

    def current():
        return bundle(env_id, mode, policy.params.copy(), value.params.copy(), disc.params.copy())

    def score(result: EvalResult) -> float:
        if expert_return is None:
            return math.nan
        return normalized_score(result.mean_return, random_return, expert_return)

    init_eval = evaluate_policy(policy, env_id, cfg.eval_episodes, cfg.seed)
    random_return = init_eval.mean_return
    record.eval_history.append((0, init_eval))
    record.best_params = current()
    record.best_score = score(init_eval) if expert_return is not None else init_eval.mean_return
    last_score = score(init_eval)
    nan = math.nan
    for it in range(1, cfg.iterations + 1):
        t0 = time.perf_counter()
        snap = state.snapshot()
        rng = rng_for(cfg.seed, "iteration", it)
        aborted = False
        try:
            batch = collect_rollout(policy, value, ensemble, cfg.rollout_steps, "discriminator")
            imit = StackBatch(batch.flat("frames"), batch.stack_index())
            expert_sample = expert.take(rng.integers(0, len(expert), size=len(imit)))
            d = disc_update(disc, imit, expert_sample, dopt, cfg.disc_minibatch, cfg.disc_epochs, rng)
            rewards = reward_from_discriminator(disc, imit)
            if not np.all(np.isfinite(rewards)):
                raise NonFiniteError("discriminator reward became non-finite")
            batch.rewards = rewards.reshape(batch.rewards.shape)
            adv = compute_gae(batch, cfg.gamma, cfg.gae_lambda)
            p = ppo_update_batch(policy, value, batch, adv, cfg, popt, vopt, rng)
            ret, length = _episode_summary(batch)
        except NonFiniteError as exc:
            log.warning("iteration %d aborted: %s", it, exc)
            state.restore(snap)
            aborted = True
            ret = length = nan
        result = None
        if _should_eval(it, cfg):
            result = evaluate_policy(policy, env_id, cfg.eval_episodes, cfg.seed)
            record.eval_history.append((it, result))
            last_score = score(result)
            key = last_score if expert_return is not None else result.mean_return
            if key > record.best_score:
                record.best_score = key
                record.best_params = current()
        elapsed = time.perf_counter() - t0
        if aborted:
            row = MetricsRow(it, elapsed if cfg.record_wall_clock else 0.0, nan, nan, nan, nan,
                             nan, nan, nan, ret, length, last_score, aborted=True)
        else:
            row = MetricsRow(it, elapsed if cfg.record_wall_clock else 0.0, d.loss,
                             d.mean_d_imitator, d.mean_d_expert, p.policy_loss, p.value_loss,
                             p.entropy, p.clip_fraction, ret, length, last_score)
        record.append(row)
        record.log_time(it, elapsed)
        if it % cfg.checkpoint_every == 0:
            record.save(current(), f"iter_{it:06d}.pifo")
        if stop_when is not None and stop_when(row, result):
            break
    record.final_params = current()
    record.save(record.final_params, "final.pifo")
    record.save(record.best_params, "best.pifo")
    return record
