"""Recording video-only demonstrations from an expert checkpoint."""

from __future__ import annotations

import os

import numpy as np

from ..envs import core as envs
from ..envs.demo_io import DemoSet, write_demos
from ..envs.render import render_mask
from ..errors import ConfigError
from ..nn.checkpoint import load_checkpoint
from ..nn.tensor import no_grad
from ..policy import sample_action
from ..rl.rollout import FrameHistory
from ..seeding import derive_seed, rng_for
from .agents import policy_from_params


def record_demos(checkpoint, env_id: str, num_trajectories: int, deterministic: bool, seed: int,
                 out_path=None) -> DemoSet:
    """Roll the expert out ``num_trajectories`` times, keeping only the rendered frames.

    Frame t is the observation before action t, so an episode of T steps
    yields T frames.
    """
    if num_trajectories < 1:
        raise ConfigError(f"num_trajectories must be >= 1, got {num_trajectories}")
    params = load_checkpoint(checkpoint) if isinstance(checkpoint, (str, os.PathLike)) else checkpoint
    policy = policy_from_params(params, env_id)
    spec = envs.get_spec(env_id)
    rng = rng_for(seed, "demo-actions")
    trajectories = []
    for k in range(num_trajectories):
        state = envs.reset(spec, derive_seed(seed, "demo-reset", k))
        frame = render_mask(spec, state).astype(np.uint8)
        history = FrameHistory(frame)
        frames = []
        while True:
            frames.append(frame)
            obs = history.stack() if policy.kind == "vision" else state.vector()
            with no_grad():
                mean, log_std = policy.forward(np.asarray(obs, dtype=np.float64))
            action = mean.data[0] if deterministic else sample_action(mean.data[0], log_std.data, rng)
            res = envs.step(spec, state, action)
            if res.done:
                break
            state = res.next
            frame = render_mask(spec, state).astype(np.uint8)
            history.push(frame)
        trajectories.append(np.stack(frames))
    demos = DemoSet(spec.id, tuple(trajectories))
    if out_path is not None:
        write_demos(demos, out_path)
    return demos
