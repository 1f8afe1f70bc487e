"""Clipped-surrogate policy optimization with an entropy bonus and a separate value fit."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import NonFiniteError
from ..nn import tensor as F
from ..nn.optim import AdamState, adam_step
from ..policy import GaussianPolicy, ValueNet, entropy, log_prob
from .config import TrainConfig
from .gae import normalize


@dataclass
class PPODiagnostics:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float


def surrogate_loss(policy: GaussianPolicy, obs, actions, old_log_probs, advantages,
                   clip_ratio: float, entropy_coef: float):
    """Negated objective ``mean(min(rho*A, clip(rho)*A)) + entropy_coef * H``.

    Returns ``(loss, surrogate_term, entropy, clip_fraction)``.
    """
    mean, log_std = policy.forward(obs)
    logp = log_prob(mean, log_std, actions)
    ratio = F.exp(F.sub(logp, old_log_probs))
    unclipped = F.mul(ratio, advantages)
    clipped = F.mul(F.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio), advantages)
    surrogate = F.mean(F.minimum(unclipped, clipped))
    ent = entropy(log_std)
    loss = F.neg(surrogate)
    if entropy_coef != 0.0:
        loss = F.sub(loss, F.mul(ent, entropy_coef))
    clip_frac = float(np.mean(np.abs(ratio.data - 1.0) > clip_ratio))
    return loss, surrogate.item(), ent.item(), clip_frac


def value_loss(value_net: ValueNet, obs, returns):
    return F.mean(F.square(F.sub(value_net.forward(obs), returns)))


def ppo_update(policy: GaussianPolicy, value_net: ValueNet, obs, actions, old_log_probs,
               advantages, returns, cfg: TrainConfig, policy_opt: AdamState,
               value_opt: AdamState, rng: np.random.Generator) -> PPODiagnostics:
    """``cfg.ppo_epochs`` passes of shuffled minibatch steps, arrays flattened over time.

    ``advantages`` are used as given (callers normalize). Raises
    NonFiniteError as soon as a loss is NaN/Inf, before touching parameters.
    """
    n = len(advantages)
    mb = min(cfg.minibatch, n)
    n_mb = max(n // mb, 1) if n else 0
    vision = policy.kind == "vision"
    pl, vl, ents, cfs = [], [], [], []
    for _ in range(cfg.ppo_epochs):
        perm = rng.permutation(n)
        for k in range(n_mb):
            sel = perm[k * mb:(k + 1) * mb]
            o = obs[sel].astype(np.float64) if vision else obs[sel]
            loss, surr, ent, cf = surrogate_loss(policy, o, actions[sel], old_log_probs[sel],
                                                 advantages[sel], cfg.clip_ratio, cfg.entropy_coef)
            if not math.isfinite(loss.item()):
                raise NonFiniteError(f"policy loss became {loss.item()}")
            v_loss = value_loss(value_net, o, returns[sel])
            if not math.isfinite(v_loss.item()):
                raise NonFiniteError(f"value loss became {v_loss.item()}")
            F.backward(loss, policy.params)
            adam_step(policy.params, policy_opt)
            F.backward(v_loss, value_net.params)
            adam_step(value_net.params, value_opt)
            pl.append(-surr)
            vl.append(v_loss.item())
            ents.append(ent)
            cfs.append(cf)
    if not pl:
        ent = float(entropy(policy.log_std.data).data)
        return PPODiagnostics(0.0, 0.0, ent, 0.0)
    return PPODiagnostics(float(np.mean(pl)), float(np.mean(vl)), float(np.mean(ents)),
                          float(np.mean(cfs)))


def ppo_update_batch(policy, value_net, batch, adv, cfg, policy_opt, value_opt, rng) -> PPODiagnostics:
    """``ppo_update`` on a RolloutBatch with its AdvantageEstimate (advantages normalized here)."""
    return ppo_update(policy, value_net, batch.flat("obs"), batch.flat("actions"),
                      batch.flat("log_probs"), normalize(adv.advantages.reshape(-1)),
                      adv.returns.reshape(-1), cfg, policy_opt, value_opt, rng)
