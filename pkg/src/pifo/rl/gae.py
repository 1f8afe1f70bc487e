"""Generalized advantage estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import UsageError


@dataclass
class AdvantageEstimate:
    advantages: np.ndarray  # [T, E]
    returns: np.ndarray  # [T, E], advantages + values

    def normalized(self) -> np.ndarray:
        return normalize(self.advantages)


def gae(rewards, values, dones, last_values, gamma: float, lam: float) -> AdvantageEstimate:
    """Backward recursion over ``[T, E]`` arrays (``[T]`` also accepted).

    delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t
    A_t     = delta_t + gamma * lam * (1 - done_t) * A_{t+1}

    V_T is ``last_values``; a done step never looks past itself.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    squeeze = rewards.ndim == 1
    if squeeze:
        rewards, values, dones = rewards[:, None], values[:, None], dones[:, None]
    last_values = np.asarray(last_values, dtype=np.float64).reshape(-1)
    if not (rewards.shape == values.shape == dones.shape) or last_values.shape[0] != rewards.shape[1]:
        raise UsageError(f"GAE length mismatch: rewards {rewards.shape}, values {values.shape}, "
                         f"dones {dones.shape}, bootstrap {last_values.shape}")
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    next_adv = np.zeros(rewards.shape[1])
    next_value = last_values
    for t in range(T - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        next_adv = delta + gamma * lam * live * next_adv
        adv[t] = next_adv
        next_value = values[t]
    ret = adv + values
    if squeeze:
        adv, ret = adv[:, 0], ret[:, 0]
    return AdvantageEstimate(adv, ret)


def compute_gae(batch, gamma: float, gae_lambda: float) -> AdvantageEstimate:
    return gae(batch.rewards, batch.values, batch.dones, batch.last_values, gamma, gae_lambda)


def normalize(adv: np.ndarray) -> np.ndarray:
    adv = np.asarray(adv, dtype=np.float64)
    if adv.size < 2:
        return adv - adv.mean() if adv.size else adv
    return (adv - adv.mean()) / (adv.std() + 1e-12)
