"""Diagonal-Gaussian policies and state-value networks.

Two interchangeable observation kinds share one contract:

* ``proprio``: state vector -> 64 -> 64 -> action mean (tanh hidden units)
* ``vision``: 4x64x64 frame stack -> conv trunk -> action mean (relu)

The log standard deviation is a free per-dimension parameter that does not
depend on the input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .nn import tensor as F
from .nn.params import LayerSpec, ParamSet, apply_layers, conv_trunk, init_params, mlp_layers
from .nn.tensor import Tensor

KINDS = ("proprio", "vision")
FRAME_SIZE = 64
STACK_DEPTH = 4
LOG_STD_INIT = -0.5
HIDDEN = (64, 64)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def trunk_layers(kind: str, in_dim: int, out_dim: int) -> list[LayerSpec]:
    if kind == "proprio":
        return mlp_layers([in_dim, *HIDDEN, out_dim], "tanh")
    if kind == "vision":
        return conv_trunk(STACK_DEPTH, FRAME_SIZE, out_dim)
    raise UsageError(f"unknown observation kind {kind!r}; expected one of {KINDS}")


def _check_input(kind: str, in_dim: int, x) -> np.ndarray | Tensor:
    data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if kind == "proprio":
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2 or data.shape[1] != in_dim:
            raise UsageError(f"proprio network expects state vectors of length {in_dim}, "
                             f"got input of shape {tuple(np.shape(x))}")
    else:
        if data.ndim == 3:
            data = data[None]
        if data.ndim != 4 or data.shape[1:] != (STACK_DEPTH, FRAME_SIZE, FRAME_SIZE):
            raise UsageError(f"vision network expects frame stacks of shape "
                             f"[{STACK_DEPTH}, {FRAME_SIZE}, {FRAME_SIZE}], "
                             f"got input of shape {tuple(np.shape(x))}")
    return data


@dataclass
class GaussianPolicy:
    kind: str
    in_dim: int
    action_dim: int
    params: ParamSet
    prefix: str = "policy/"
    layers: list[LayerSpec] = field(init=False)

    def __post_init__(self):
        self.layers = trunk_layers(self.kind, self.in_dim, self.action_dim)

    @classmethod
    def create(cls, kind: str, in_dim: int, action_dim: int, seed: int,
               prefix: str = "policy/") -> "GaussianPolicy":
        params = init_params(trunk_layers(kind, in_dim, action_dim), seed, prefix=prefix)
        params[f"{prefix}log_std"] = np.full(action_dim, LOG_STD_INIT)
        return cls(kind, in_dim, action_dim, params, prefix)

    @property
    def log_std(self) -> Tensor:
        return self.params[f"{self.prefix}log_std"]

    def forward(self, x) -> tuple[Tensor, Tensor]:
        return policy_forward(self, x)


@dataclass
class ValueNet:
    kind: str
    in_dim: int
    params: ParamSet
    prefix: str = "value/"
    layers: list[LayerSpec] = field(init=False)

    def __post_init__(self):
        self.layers = trunk_layers(self.kind, self.in_dim, 1)

    @classmethod
    def create(cls, kind: str, in_dim: int, seed: int, prefix: str = "value/") -> "ValueNet":
        return cls(kind, in_dim, init_params(trunk_layers(kind, in_dim, 1), seed, prefix=prefix),
                   prefix)

    def forward(self, x) -> Tensor:
        """Values with shape [batch]."""
        data = _check_input(self.kind, self.in_dim, x)
        out = apply_layers(self.params, self.layers, Tensor(data), self.prefix)
        return F.reshape(out, (out.shape[0],))


def policy_forward(policy: GaussianPolicy, x) -> tuple[Tensor, Tensor]:
    """Action mean [batch, action_dim] and the shared log std [action_dim]."""
    data = _check_input(policy.kind, policy.in_dim, x)
    mean = apply_layers(policy.params, policy.layers, Tensor(data), policy.prefix)
    return mean, policy.log_std


def sample_action(mean, log_std, rng: np.random.Generator) -> np.ndarray:
    """``mean + exp(log_std) * z`` with ``z`` standard normal."""
    mean = np.asarray(mean.data if isinstance(mean, Tensor) else mean, dtype=np.float64)
    log_std = np.asarray(log_std.data if isinstance(log_std, Tensor) else log_std, dtype=np.float64)
    z = rng.standard_normal(mean.shape)
    return mean + np.exp(log_std) * z


def log_prob(mean, log_std, action) -> Tensor:
    """Diagonal-Gaussian log density, summed over the last axis."""
    mean, log_std = F.as_tensor(mean), F.as_tensor(log_std)
    z = F.div(F.sub(action, mean), F.exp(log_std))
    d = mean.shape[-1]
    quad = F.sum_(F.square(z), axis=-1)
    return F.sub(F.mul(quad, -0.5), F.sum_(log_std) + d * _HALF_LOG_2PI)


def entropy(log_std) -> Tensor:
    """``sum_i (log_std_i + 0.5 * log(2 pi e))``; independent of the mean."""
    log_std = F.as_tensor(log_std)
    return F.add(F.sum_(log_std), log_std.shape[-1] * (0.5 + _HALF_LOG_2PI))
