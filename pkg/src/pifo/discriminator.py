"""Frame stacking and the convolutional discriminator.

Label convention: imitator stacks are class 1, expert stacks class 0. A low
output therefore means "looks like the expert", and the imitator's reward is
``-log D``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NonFiniteError, UsageError
from .nn import tensor as F
from .nn.optim import AdamState, adam_step
from .nn.params import LayerSpec, ParamSet, apply_layers, conv_trunk, init_params
from .nn.tensor import Tensor, no_grad

STACK_DEPTH = 4
FRAME_SIZE = 64
PROB_MIN = 1e-6
PROB_MAX = 1.0 - 1e-6
EVAL_CHUNK = 256


def stack_indices(length: int) -> np.ndarray:
    """Frame indices ``(t-2, t-1, t, t+1)`` for each t, replicated at both edges."""
    if length < 1:
        raise UsageError("cannot build frame stacks from an empty frame sequence")
    t = np.arange(length)[:, None] + np.arange(-2, 2)[None, :]
    return np.clip(t, 0, length - 1)


def build_stacks(frames) -> np.ndarray:
    """``[T, 64, 64]`` frames -> ``[T, 4, 64, 64]`` stacks, one per timestep."""
    frames = np.asarray(frames)
    if frames.ndim != 3 or len(frames) == 0:
        raise UsageError(f"build_stacks needs a non-empty [T, H, W] frame sequence, "
                         f"got shape {frames.shape}")
    return frames[stack_indices(len(frames))]


def segment_stack_indices(lengths: Sequence[int], offsets: Sequence[int] | None = None) -> np.ndarray:
    """Stack indices for several independent trajectories laid end to end.

    ``offsets[i]`` is where trajectory i starts in the flat frame buffer; stacks
    never reach into a neighbouring trajectory.
    """
    if offsets is None:
        offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(int)
    parts = [stack_indices(n) + off for n, off in zip(lengths, offsets) if n > 0]
    if not parts:
        return np.zeros((0, STACK_DEPTH), dtype=int)
    return np.concatenate(parts)


@dataclass
class StackBatch:
    """Frame stacks stored as indices into a shared uint8/float frame buffer."""

    frames: np.ndarray  # [N, 64, 64]
    index: np.ndarray  # [M, 4]

    @classmethod
    def from_array(cls, stacks) -> "StackBatch":
        stacks = np.asarray(stacks)
        if stacks.ndim == 3:
            stacks = stacks[None]
        m = stacks.shape[0]
        return cls(stacks.reshape(m * STACK_DEPTH, *stacks.shape[2:]),
                   np.arange(m * STACK_DEPTH).reshape(m, STACK_DEPTH))

    def __len__(self) -> int:
        return len(self.index)

    def gather(self, sel=None) -> np.ndarray:
        idx = self.index if sel is None else self.index[sel]
        return self.frames[idx].astype(np.float64)

    def take(self, sel) -> "StackBatch":
        return StackBatch(self.frames, self.index[sel])


def as_stack_batch(stacks) -> StackBatch:
    return stacks if isinstance(stacks, StackBatch) else StackBatch.from_array(stacks)


@dataclass
class Discriminator:
    params: ParamSet
    prefix: str = "disc/"
    layers: list[LayerSpec] = field(init=False)

    def __post_init__(self):
        self.layers = conv_trunk(STACK_DEPTH, FRAME_SIZE, 1)

    @classmethod
    def create(cls, seed: int, prefix: str = "disc/") -> "Discriminator":
        return cls(init_params(conv_trunk(STACK_DEPTH, FRAME_SIZE, 1), seed, prefix=prefix), prefix)


def disc_forward(disc: Discriminator, stacks) -> Tensor:
    """Clamped probabilities ``[batch]`` that each stack came from the imitator."""
    x = np.asarray(stacks, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1:] != (STACK_DEPTH, FRAME_SIZE, FRAME_SIZE):
        raise UsageError(f"discriminator expects [batch, 4, 64, 64] stacks, got {x.shape}")
    logits = apply_layers(disc.params, disc.layers, Tensor(x), disc.prefix)
    p = F.sigmoid(F.reshape(logits, (x.shape[0],)))
    return F.clip(p, PROB_MIN, PROB_MAX)


def probabilities(disc: Discriminator, stacks) -> np.ndarray:
    """Gradient-free, chunked ``disc_forward`` over a StackBatch or array."""
    batch = as_stack_batch(stacks)
    out = np.empty(len(batch))
    with no_grad():
        for lo in range(0, len(batch), EVAL_CHUNK):
            sel = slice(lo, lo + EVAL_CHUNK)
            out[sel] = disc_forward(disc, batch.gather(sel)).data
    return out


def loss_from_probabilities(d_imitator, d_expert) -> Tensor:
    """``-(mean log D(imitator) + mean log(1 - D(expert)))``."""
    d_imitator, d_expert = F.as_tensor(d_imitator), F.as_tensor(d_expert)
    if d_imitator.data.size == 0 or d_expert.data.size == 0:
        raise UsageError("discriminator loss needs non-empty imitator and expert batches")
    return F.neg(F.add(F.mean(F.log(d_imitator)), F.mean(F.log(F.sub(1.0, d_expert)))))


def disc_loss(disc: Discriminator, imitator_stacks, expert_stacks) -> Tensor:
    if len(imitator_stacks) == 0 or len(expert_stacks) == 0:
        raise UsageError("discriminator loss needs non-empty imitator and expert batches")
    return loss_from_probabilities(disc_forward(disc, imitator_stacks),
                                   disc_forward(disc, expert_stacks))


def reward_from_probability(p) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_MIN, PROB_MAX)
    return -np.log(p)


def reward_from_discriminator(disc: Discriminator, stacks) -> np.ndarray:
    """Imitator reward ``-log D`` per stack; larger means more expert-like."""
    return reward_from_probability(probabilities(disc, stacks))


@dataclass
class DiscDiagnostics:
    loss: float
    mean_d_imitator: float
    mean_d_expert: float


def disc_update(disc: Discriminator, imitator_stacks, expert_stacks, optimizer: AdamState,
                minibatch: int, epochs: int, rng: np.random.Generator) -> DiscDiagnostics:
    """Shuffled minibatch Adam on the discriminator loss.

    Each step pairs ``minibatch`` imitator stacks with ``minibatch`` expert
    stacks. Diagnostics average the per-step values; with ``epochs == 0`` they
    describe the current discriminator on the full batches instead.
    """
    imit, expert = as_stack_batch(imitator_stacks), as_stack_batch(expert_stacks)
    if len(imit) < minibatch or len(expert) < minibatch:
        raise UsageError(f"discriminator minibatch {minibatch} exceeds batch sizes "
                         f"({len(imit)} imitator, {len(expert)} expert)")
    if epochs == 0:
        p_i, p_e = probabilities(disc, imit), probabilities(disc, expert)
        loss = loss_from_probabilities(p_i, p_e).item()
        return DiscDiagnostics(loss, float(p_i.mean()), float(p_e.mean()))
    losses, d_i, d_e = [], [], []
    n_steps = len(imit) // minibatch
    for _ in range(epochs):
        perm_i = rng.permutation(len(imit))
        perm_e = rng.permutation(len(expert))
        for k in range(n_steps):
            sel_i = perm_i[k * minibatch:(k + 1) * minibatch]
            sel_e = perm_e[np.arange(k * minibatch, (k + 1) * minibatch) % len(expert)]
            p_i = disc_forward(disc, imit.gather(sel_i))
            p_e = disc_forward(disc, expert.gather(sel_e))
            loss = loss_from_probabilities(p_i, p_e)
            if not math.isfinite(loss.item()):
                raise NonFiniteError(f"discriminator loss became {loss.item()}")
            F.backward(loss, disc.params)
            adam_step(disc.params, optimizer)
            losses.append(loss.item())
            d_i.append(float(p_i.data.mean()))
            d_e.append(float(p_e.data.mean()))
    return DiscDiagnostics(float(np.mean(losses)), float(np.mean(d_i)), float(np.mean(d_e)))


def accuracy(disc: Discriminator, imitator_stacks, expert_stacks) -> float:
    """Fraction classified correctly with threshold 0.5 (imitator -> D > 0.5)."""
    p_i = probabilities(disc, imitator_stacks)
    p_e = probabilities(disc, expert_stacks)
    return float((np.sum(p_i > 0.5) + np.sum(p_e <= 0.5)) / (len(p_i) + len(p_e)))
