"""Deterministic continuous-control tasks: cart-pole balancing, continuous
mountain-car and a 2-D point mass reaching a fixed goal.

Environments are value-like: ``reset`` and ``step`` return fresh immutable
states, so any number of episodes can be advanced independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, UsageError


@dataclass(frozen=True)
class EnvSpec:
    id: str
    proprio_dim: int
    action_dim: int
    action_low: tuple[float, ...]
    action_high: tuple[float, ...]
    max_steps: int


ENV_SPECS: dict[str, EnvSpec] = {
    "cartpole-balance": EnvSpec("cartpole-balance", 4, 1, (-10.0,), (10.0,), 200),
    "mountain-car": EnvSpec("mountain-car", 2, 1, (-1.0,), (1.0,), 300),
    "point-mass": EnvSpec("point-mass", 4, 2, (-1.0, -1.0), (1.0, 1.0), 150),
}

# cart-pole constants
GRAVITY = 9.8
CART_MASS = 1.0
POLE_MASS = 0.1
POLE_HALF_LENGTH = 0.5
CARTPOLE_DT = 0.02
THETA_LIMIT = 0.2
X_LIMIT = 2.4

# mountain-car constants
MC_POWER = 0.0015
MC_GRAVITY = 0.0025
MC_MAX_SPEED = 0.07
MC_MIN_POS, MC_MAX_POS = -1.2, 0.6
MC_GOAL = 0.45

# point-mass constants
PM_DT = 0.05
PM_DAMPING = 0.95
PM_GOAL = (0.5, 0.5)


@dataclass(frozen=True)
class EnvState:
    s: tuple[float, ...]
    step_index: int = 0
    done: bool = False

    def vector(self) -> np.ndarray:
        return np.asarray(self.s, dtype=np.float64)


@dataclass(frozen=True)
class StepResult:
    next: EnvState
    reward: float
    done: bool


def get_spec(env) -> EnvSpec:
    if isinstance(env, EnvSpec):
        return env
    try:
        return ENV_SPECS[env]
    except KeyError:
        raise ConfigError(f"unknown env id {env!r}; expected one of {sorted(ENV_SPECS)}") from None


def reset(env, seed: int) -> EnvState:
    spec = get_spec(env)
    rng = np.random.default_rng(seed)
    if spec.id == "cartpole-balance":
        s = tuple(float(v) for v in rng.uniform(-0.05, 0.05, size=4))
    elif spec.id == "mountain-car":
        s = (float(rng.uniform(-0.6, -0.4)), 0.0)
    else:
        x, y = rng.uniform(-0.8, 0.8, size=2)
        s = (float(x), float(y), 0.0, 0.0)
    return EnvState(s, 0, False)


def clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


def clamp_action(spec: EnvSpec, action) -> tuple[float, ...]:
    a = np.asarray(action, dtype=np.float64).reshape(-1)
    if a.shape[0] != spec.action_dim:
        raise UsageError(f"{spec.id} expects {spec.action_dim} action dims, got {a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise UsageError(f"non-finite action {a.tolist()} for {spec.id}")
    return tuple(clamp(float(v), lo, hi) for v, lo, hi in zip(a, spec.action_low, spec.action_high))


def cartpole_accelerations(x_dot, theta, theta_dot, force):
    total = CART_MASS + POLE_MASS
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    temp = (force + POLE_MASS * POLE_HALF_LENGTH * theta_dot * theta_dot * sin_t) / total
    theta_acc = (GRAVITY * sin_t - cos_t * temp) / (
        POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos_t * cos_t / total))
    x_acc = (force + POLE_MASS * POLE_HALF_LENGTH
             * (theta_dot * theta_dot * sin_t - theta_acc * cos_t)) / total
    return x_acc, theta_acc


def step(env, state: EnvState, action) -> StepResult:
    spec = get_spec(env)
    if state.done or state.step_index >= spec.max_steps:
        raise UsageError(f"step called on a finished {spec.id} episode (step {state.step_index})")
    a = clamp_action(spec, action)
    n = state.step_index + 1
    if spec.id == "cartpole-balance":
        x, x_dot, theta, theta_dot = state.s
        x_acc, theta_acc = cartpole_accelerations(x_dot, theta, theta_dot, a[0])
        x = x + CARTPOLE_DT * x_dot
        x_dot = x_dot + CARTPOLE_DT * x_acc
        theta = theta + CARTPOLE_DT * theta_dot
        theta_dot = theta_dot + CARTPOLE_DT * theta_acc
        s = (x, x_dot, theta, theta_dot)
        reward = 1.0
        terminal = abs(theta) > THETA_LIMIT or abs(x) > X_LIMIT
    elif spec.id == "mountain-car":
        p, v = state.s
        v = clamp(v + MC_POWER * a[0] - MC_GRAVITY * math.cos(3.0 * p), -MC_MAX_SPEED, MC_MAX_SPEED)
        p = clamp(p + v, MC_MIN_POS, MC_MAX_POS)
        if p == MC_MIN_POS and v < 0.0:
            v = 0.0
        s = (p, v)
        terminal = p >= MC_GOAL
        reward = -0.1 * a[0] * a[0] + (100.0 if terminal else 0.0)
    else:
        x, y, vx, vy = state.s
        vx = clamp(PM_DAMPING * vx + a[0] * PM_DT, -1.0, 1.0)
        vy = clamp(PM_DAMPING * vy + a[1] * PM_DT, -1.0, 1.0)
        x = clamp(x + vx * PM_DT, -1.0, 1.0)
        y = clamp(y + vy * PM_DT, -1.0, 1.0)
        s = (x, y, vx, vy)
        reward = -math.hypot(x - PM_GOAL[0], y - PM_GOAL[1])
        terminal = False
    done = terminal or n >= spec.max_steps
    return StepResult(EnvState(s, n, done), reward, done)


def goal_distance(state: EnvState) -> float:
    """Point-mass distance to goal."""
    return math.hypot(state.s[0] - PM_GOAL[0], state.s[1] - PM_GOAL[1])
