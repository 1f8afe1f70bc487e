"""Named parameter collections, layer descriptions and fan-in initialization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..errors import ShapeError
from . import tensor as F
from .tensor import Tensor


class ParamSet(dict):
    """Insertion-ordered ``name -> Tensor`` map; each tensor carries its own ``.grad``."""

    def __setitem__(self, name: str, value: Tensor) -> None:
        if not isinstance(value, Tensor):
            value = Tensor(value, requires_grad=True)
        if value.grad is None or value.grad.shape != value.data.shape:
            value.requires_grad = True
            value.grad = np.zeros_like(value.data)
        super().__setitem__(name, value)

    def zero_grad(self) -> None:
        for t in self.values():
            t.zero_grad()

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.items()}

    def copy(self) -> "ParamSet":
        out = ParamSet()
        for k, t in self.items():
            out[k] = Tensor(t.data.copy(), requires_grad=True)
        return out

    def assign(self, other: "ParamSet") -> None:
        """Copy values (not grads) from ``other`` in place."""
        for k, t in self.items():
            src = other[k].data
            if src.shape != t.data.shape:
                raise ShapeError(f"cannot assign {k}: dims {list(src.shape)} vs {t.dims}")
            t.data[...] = src

    def subset(self, prefix: str) -> "ParamSet":
        out = ParamSet()
        for k, t in self.items():
            if k.startswith(prefix):
                out[k] = t
        return out

    def num_values(self) -> int:
        return sum(t.data.size for t in self.values())


def merge(*sets: ParamSet) -> ParamSet:
    out = ParamSet()
    for s in sets:
        for k, t in s.items():
            if k in out:
                raise KeyError(f"duplicate parameter name {k!r}")
            out[k] = t
    return out


@dataclass(frozen=True)
class LayerSpec:
    """One dense or conv layer. For conv, ``n_in``/``n_out`` are channel counts."""

    name: str
    kind: str  # "dense" | "conv"
    n_in: int
    n_out: int
    kernel: int = 0
    stride: int = 1
    activation: str | None = None

    @property
    def weight_dims(self) -> tuple[int, ...]:
        if self.kind == "dense":
            return (self.n_out, self.n_in)
        return (self.n_out, self.n_in, self.kernel, self.kernel)

    @property
    def fan_in(self) -> int:
        return self.n_in * (self.kernel * self.kernel if self.kind == "conv" else 1)


def init_params(layers: Sequence[LayerSpec], seed: int, prefix: str = "") -> ParamSet:
    """Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) weights and zero biases.

    Values are rounded to float32 so a checkpoint round trip is exact.
    """
    rng = np.random.default_rng(seed)
    params = ParamSet()
    for layer in layers:
        bound = np.sqrt(1.0 / layer.fan_in)
        w = rng.uniform(-bound, bound, size=layer.weight_dims)
        params[f"{prefix}{layer.name}/weight"] = w.astype(np.float32).astype(np.float64)
        params[f"{prefix}{layer.name}/bias"] = np.zeros(layer.n_out)
    return params


def apply_layers(params: ParamSet, layers: Iterable[LayerSpec], x: Tensor, prefix: str = "") -> Tensor:
    """Run ``x`` through the layer stack, flattening conv output before a dense layer."""
    for layer in layers:
        w = params[f"{prefix}{layer.name}/weight"]
        b = params[f"{prefix}{layer.name}/bias"]
        if layer.kind == "conv":
            x = F.conv2d(x, w, b, layer.stride)
        else:
            if x.data.ndim != 2:
                x = F.reshape(x, (x.shape[0], -1))
            x = F.dense(x, w, b)
        if layer.activation is not None:
            x = F.activation(x, layer.activation)
    return x


def mlp_layers(sizes: Sequence[int], hidden_activation: str, name: str = "fc") -> list[LayerSpec]:
    layers = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        act = hidden_activation if i < len(sizes) - 2 else None
        layers.append(LayerSpec(f"{name}{i}", "dense", a, b, activation=act))
    return layers


def conv_trunk(in_channels: int, size: int, out_dim: int, activation: str = "relu") -> list[LayerSpec]:
    """Conv(8, 8x8, /4) -> conv(16, 4x4, /2) -> dense(64) over square ``size`` frames.

    ``out_dim`` is the width of the final (linear) dense layer.
    """
    h1 = F.conv_output_size(size, 8, 4)
    h2 = F.conv_output_size(h1, 4, 2)
    return [
        LayerSpec("conv0", "conv", in_channels, 8, kernel=8, stride=4, activation=activation),
        LayerSpec("conv1", "conv", 8, 16, kernel=4, stride=2, activation=activation),
        LayerSpec("fc0", "dense", 16 * h2 * h2, 64, activation=activation),
        LayerSpec("fc1", "dense", 64, out_dim),
    ]
