"""Building agents from a run seed and recovering them from checkpoints.

Checkpoints carry two marker entries besides the weights:
``meta/env/<env id>`` and ``meta/kind/<proprio|vision>`` (one value each).
"""

from __future__ import annotations

import numpy as np

from ..discriminator import Discriminator
from ..envs.core import get_spec
from ..errors import ConfigError
from ..nn.params import ParamSet, merge
from ..nn.tensor import Tensor
from ..policy import KINDS, GaussianPolicy, ValueNet
from ..seeding import derive_seed

ENV_META = "meta/env/"
KIND_META = "meta/kind/"


def policy_input_dim(env_id: str, kind: str) -> int:
    return get_spec(env_id).proprio_dim if kind == "proprio" else 0


def fresh_policy(env_id: str, kind: str, seed: int) -> GaussianPolicy:
    spec = get_spec(env_id)
    return GaussianPolicy.create(kind, policy_input_dim(env_id, kind), spec.action_dim,
                                 derive_seed(seed, "policy"))


def fresh_value(env_id: str, kind: str, seed: int) -> ValueNet:
    return ValueNet.create(kind, policy_input_dim(env_id, kind), derive_seed(seed, "value"))


def fresh_discriminator(seed: int) -> Discriminator:
    return Discriminator.create(derive_seed(seed, "disc"))


def meta_params(env_id: str, kind: str) -> ParamSet:
    meta = ParamSet()
    meta[ENV_META + env_id] = Tensor(np.ones(1), requires_grad=True)
    meta[KIND_META + kind] = Tensor(np.ones(1), requires_grad=True)
    return meta


def bundle(env_id: str, kind: str, *sets: ParamSet) -> ParamSet:
    return merge(*sets, meta_params(env_id, kind))


def checkpoint_meta(params: ParamSet) -> tuple[str | None, str | None]:
    env = next((k[len(ENV_META):] for k in params if k.startswith(ENV_META)), None)
    kind = next((k[len(KIND_META):] for k in params if k.startswith(KIND_META)), None)
    return env, kind


def policy_from_params(params: ParamSet, env_id: str | None = None) -> GaussianPolicy:
    """Rebuild the policy stored under ``policy/``; checks the env marker if given."""
    ck_env, kind = checkpoint_meta(params)
    if env_id is not None:
        get_spec(env_id)
        if ck_env is not None and ck_env != env_id:
            raise ConfigError(f"checkpoint was trained on {ck_env!r}, not {env_id!r}")
    env_id = env_id or ck_env
    if env_id is None:
        raise ConfigError("checkpoint has no env marker; pass the env id explicitly")
    if kind is None:
        kind = "vision" if "policy/conv0/weight" in params else "proprio"
    if kind not in KINDS:
        raise ConfigError(f"checkpoint policy kind {kind!r} not in {KINDS}")
    spec = get_spec(env_id)
    try:
        if kind == "proprio" and params["policy/fc0/weight"].shape[1] != spec.proprio_dim:
            raise ConfigError(f"checkpoint policy input width does not match {env_id}")
        if params["policy/log_std"].shape[0] != spec.action_dim:
            raise ConfigError(f"checkpoint policy action width does not match {env_id}")
        policy = GaussianPolicy(kind, policy_input_dim(env_id, kind), spec.action_dim, ParamSet())
        for name in [f"policy/{layer.name}/{p}" for layer in policy.layers for p in ("weight", "bias")]:
            policy.params[name] = params[name]
        policy.params["policy/log_std"] = params["policy/log_std"]
    except KeyError as exc:
        raise ConfigError(f"checkpoint is missing policy entry {exc.args[0]}") from None
    return policy
