"""Adam with bias correction over a ParamSet."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import StateError
from .params import ParamSet


@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ParamSet, lr: float, **kw) -> "AdamState":
        state = cls(lr=lr, **kw)
        for name, t in params.items():
            state.m[name] = np.zeros_like(t.data)
            state.v[name] = np.zeros_like(t.data)
        return state

    def copy(self) -> "AdamState":
        return AdamState(self.lr, self.beta1, self.beta2, self.eps, self.step,
                         {k: a.copy() for k, a in self.m.items()},
                         {k: a.copy() for k, a in self.v.items()})


def adam_step(params: ParamSet, state: AdamState) -> None:
    """One in-place Adam update from the current ``.grad`` slots.

    Grads are left untouched; callers reset them before the next backward.
    """
    if set(state.m) != set(params):
        missing = sorted(set(params) ^ set(state.m))
        raise StateError(f"optimizer state does not match parameters: {missing}")
    for name, t in params.items():
        if state.m[name].shape != t.data.shape or state.v[name].shape != t.data.shape:
            raise StateError(f"moment dims {list(state.m[name].shape)} do not match "
                             f"parameter {name} dims {t.dims}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name, t in params.items():
        g = t.grad
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        t.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
