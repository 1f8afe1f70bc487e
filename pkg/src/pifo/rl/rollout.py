"""Rollout collection over an ensemble of environment instances."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..envs import core as envs
from ..envs.render import SIZE, render_mask
from ..errors import ConfigError
from ..nn.tensor import no_grad
from ..policy import STACK_DEPTH, GaussianPolicy, ValueNet, log_prob, sample_action
from ..seeding import derive_seed

REWARD_SOURCES = ("ground_truth", "discriminator")


def worker_count() -> int:
    raw = os.environ.get("PIFO_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"PIFO_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"PIFO_THREADS must be a positive integer, got {raw!r}")
    return n


class FrameHistory:
    """Last four frames of one episode, oldest first; the first frame fills the gap."""

    def __init__(self, first: np.ndarray):
        self.frames = [first] * STACK_DEPTH

    def push(self, frame: np.ndarray) -> None:
        self.frames = self.frames[1:] + [frame]

    def stack(self) -> np.ndarray:
        return np.stack(self.frames)


@dataclass
class EpisodeStats:
    returns: list[float] = field(default_factory=list)
    lengths: list[int] = field(default_factory=list)
    final_states: list[envs.EnvState] = field(default_factory=list)


@dataclass
class RolloutBatch:
    """Timestep-major arrays: index ``[t, e]`` is step t of environment e."""

    obs: np.ndarray  # [T, E, proprio_dim] or [T, E, 4, 64, 64] uint8 for vision
    actions: np.ndarray  # [T, E, action_dim]
    log_probs: np.ndarray  # [T, E]
    values: np.ndarray  # [T, E]
    rewards: np.ndarray  # [T, E]
    true_rewards: np.ndarray  # [T, E]
    dones: np.ndarray  # [T, E] bool
    frames: np.ndarray  # [T, E, 64, 64] uint8 in {0, 1}
    last_values: np.ndarray  # [E], V of the state after the final step (0 where done)
    episodes: EpisodeStats

    @property
    def num_steps(self) -> int:
        return self.rewards.shape[0]

    @property
    def num_envs(self) -> int:
        return self.rewards.shape[1]

    def __len__(self) -> int:
        return self.rewards.size

    def segments(self):
        """``(env, start, stop)`` runs of consecutive steps belonging to one episode."""
        T, E = self.rewards.shape
        for e in range(E):
            start = 0
            for t in range(T):
                if self.dones[t, e]:
                    yield e, start, t + 1
                    start = t + 1
            if start < T:
                yield e, start, T

    def stack_index(self) -> np.ndarray:
        """Discriminator stack indices ``[T*E, 4]`` into ``frames.reshape(-1, 64, 64)``,
        ordered like ``rewards.reshape(-1)``; stacks stay inside one episode segment."""
        T, E = self.rewards.shape
        out = np.empty((T * E, 4), dtype=np.int64)
        for e, start, stop in self.segments():
            n = stop - start
            local = np.clip(np.arange(n)[:, None] + np.arange(-2, 2)[None, :], 0, n - 1)
            flat_t = (start + local) * E + e
            out[(start + np.arange(n)) * E + e] = flat_t
        return out

    def flat(self, name: str) -> np.ndarray:
        a = getattr(self, name)
        return a.reshape(a.shape[0] * a.shape[1], *a.shape[2:])


class EnvEnsemble:
    """E independent environment instances that persist across rollouts.

    Instance e samples actions from its own stream ``base ^ e`` and draws
    reset seeds from a counter, so single-worker runs are bit-reproducible
    and the result does not depend on the worker count.
    """

    def __init__(self, env_id: str, num_envs: int, seed: int, obs_kind: str = "proprio"):
        self.spec = envs.get_spec(env_id)
        self.num_envs = num_envs
        self.seed = seed
        self.obs_kind = obs_kind
        base = derive_seed(seed, "action-noise")
        self.rngs = [np.random.default_rng(base ^ e) for e in range(num_envs)]
        self.episode_counter = [0] * num_envs
        self.states: list[envs.EnvState] = [None] * num_envs
        self.histories: list[FrameHistory] = [None] * num_envs
        self.frames: list[np.ndarray] = [None] * num_envs
        self.partial_return = [0.0] * num_envs
        self._workers = worker_count()
        for e in range(num_envs):
            self._reset(e)

    def _reset(self, e: int) -> None:
        s = envs.reset(self.spec, derive_seed(self.seed, "train-reset", e, self.episode_counter[e]))
        self.episode_counter[e] += 1
        self.states[e] = s
        self.frames[e] = render_mask(self.spec, s).astype(np.uint8)
        self.histories[e] = FrameHistory(self.frames[e])
        self.partial_return[e] = 0.0

    def _map(self, fn, items):
        if self._workers > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=min(self._workers, len(items))) as pool:
                return list(pool.map(fn, items))
        return [fn(i) for i in items]

    def observations(self) -> np.ndarray:
        if self.obs_kind == "vision":
            return np.stack([h.stack() for h in self.histories])
        return np.stack([s.vector() for s in self.states])


def collect_rollout(policy: GaussianPolicy, value_net: ValueNet, ensemble: EnvEnsemble,
                    steps: int, reward_source: str = "ground_truth") -> RolloutBatch:
    """Run ``steps`` transitions in total, split evenly over the ensemble.

    With ``reward_source == "discriminator"`` the ``rewards`` array is left at
    zero for the caller to fill once frame stacks (which need o_{t+1}) exist.
    """
    if reward_source not in REWARD_SOURCES:
        raise ConfigError(f"reward_source must be one of {REWARD_SOURCES}, got {reward_source!r}")
    E = ensemble.num_envs
    if steps % E:
        raise ConfigError(f"steps={steps} not divisible by {E} environments")
    T = steps // E
    spec = ensemble.spec
    vision = ensemble.obs_kind == "vision"
    obs_shape = (STACK_DEPTH, SIZE, SIZE) if vision else (spec.proprio_dim,)
    obs = np.zeros((T, E, *obs_shape), dtype=np.uint8 if vision else np.float64)
    actions = np.zeros((T, E, spec.action_dim))
    log_probs = np.zeros((T, E))
    values = np.zeros((T, E))
    true_rewards = np.zeros((T, E))
    dones = np.zeros((T, E), dtype=bool)
    frames = np.zeros((T, E, SIZE, SIZE), dtype=np.uint8)
    stats = EpisodeStats()

    for t in range(T):
        o = ensemble.observations()
        obs[t] = o
        frames[t] = np.stack(ensemble.frames)
        with no_grad():
            mean, log_std = policy.forward(o.astype(np.float64))
            values[t] = value_net.forward(o.astype(np.float64)).data
        a = np.stack([sample_action(mean.data[e], log_std.data, ensemble.rngs[e]) for e in range(E)])
        actions[t] = a
        log_probs[t] = log_prob(mean.data, log_std.data, a).data

        def advance(e):
            res = envs.step(spec, ensemble.states[e], a[e])
            frame = None if res.done else render_mask(spec, res.next).astype(np.uint8)
            return res, frame

        for e, (res, frame) in enumerate(ensemble._map(advance, list(range(E)))):
            true_rewards[t, e] = res.reward
            dones[t, e] = res.done
            ensemble.partial_return[e] += res.reward
            if res.done:
                stats.returns.append(ensemble.partial_return[e])
                stats.lengths.append(res.next.step_index)
                stats.final_states.append(res.next)
                ensemble._reset(e)
            else:
                ensemble.states[e] = res.next
                ensemble.frames[e] = frame
                ensemble.histories[e].push(frame)

    last_values = np.zeros(E)
    if T > 0:
        with no_grad():
            last_values = value_net.forward(ensemble.observations().astype(np.float64)).data.copy()
        # after a terminal final step the ensemble already reset; nothing to bootstrap
        last_values[dones[-1]] = 0.0
    rewards = true_rewards.copy() if reward_source == "ground_truth" else np.zeros((T, E))
    return RolloutBatch(obs, actions, log_probs, values, rewards, true_rewards, dones, frames,
                        last_values, stats)
