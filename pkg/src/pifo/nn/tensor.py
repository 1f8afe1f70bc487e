"""Tape-based reverse-mode differentiation over float64 numpy arrays.

Every op records its parents and a closure mapping the output gradient to
parent gradients. ``backward`` walks the recorded graph in reverse
topological order. Recording is skipped inside ``no_grad()`` or when no
input requires a gradient, so inference pays only the numpy cost.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError, UsageError

_state = threading.local()

# largest float64 strictly below 1.0, and smallest positive normal
_ONE_MINUS = float(np.nextafter(1.0, 0.0))
_TINY = float(np.finfo(np.float64).tiny)


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def dims(self) -> list[int]:
        return list(self.data.shape)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got dims {self.dims}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Tensor(dims={self.dims}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0.0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    """Logistic function, kept strictly inside (0, 1) even where float64 saturates."""
    a = as_tensor(a)
    x = a.data
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    out = np.clip(out, _TINY, _ONE_MINUS)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def activation(a, kind: str) -> Tensor:
    if kind == "tanh":
        return tanh(a)
    if kind == "relu":
        return relu(a)
    if kind == "sigmoid":
        return sigmoid(a)
    raise ValueError(f"unknown activation {kind!r}; expected tanh, relu or sigmoid")


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    mask = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


def minimum(a, b) -> Tensor:
    """Elementwise min; ties route the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data
    return _make(np.where(pick_a, a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(g * pick_a, a.shape),
                            _unbroadcast(g * ~pick_a, b.shape)))


# ---------------------------------------------------------------- reductions

def sum_(a, axis=None) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _make(out, (a,), bw)


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


# ---------------------------------------------------------------- layers

def dense(x, weight, bias) -> Tensor:
    """``y[b, o] = sum_i weight[o, i] * x[b, i] + bias[o]``."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.data.ndim != 2 or weight.data.ndim != 2 or bias.data.ndim != 1:
        raise ShapeError(f"dense expects x[batch,in], weights[out,in], bias[out]; "
                         f"got x{x.dims}, weights{weight.dims}, bias{bias.dims}")
    if x.shape[1] != weight.shape[1] or bias.shape[0] != weight.shape[0]:
        raise ShapeError(f"dense dimension mismatch: x{x.dims} vs weights{weight.dims} "
                         f"(bias{bias.dims})")
    out = x.data @ weight.data.T + bias.data

    def bw(g):
        gx = g @ weight.data if x.requires_grad else None
        return gx, g.T @ x.data, g.sum(axis=0)

    return _make(out, (x, weight, bias), bw)


def conv_output_size(size: int, kernel: int, stride: int) -> int:
    return (size - kernel) // stride + 1


def conv2d(x, kernel, bias, stride: int = 1) -> Tensor:
    """Valid (unpadded) cross-correlation of ``x[B,C,H,W]`` with ``kernel[O,C,k,k]``."""
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    if x.data.ndim != 4 or kernel.data.ndim != 4 or bias.data.ndim != 1:
        raise ShapeError(f"conv2d expects x[B,C,H,W], kernel[O,C,k,k], bias[O]; "
                         f"got x{x.dims}, kernel{kernel.dims}, bias{bias.dims}")
    B, C, H, W = x.shape
    O, Ck, kh, kw = kernel.shape
    if Ck != C or kh != kw or bias.shape[0] != O:
        raise ShapeError(f"conv2d dimension mismatch: x{x.dims} vs kernel{kernel.dims} "
                         f"(bias{bias.dims})")
    if stride < 1:
        raise ShapeError(f"conv2d stride must be positive, got {stride}")
    if kh > H or kw > W:
        raise ShapeError(f"conv2d kernel {kernel.dims} larger than input {x.dims}")
    if kh % stride == 0:
        out, bw_core = _conv_blocked(x.data, kernel.data, stride, x.requires_grad)
    else:
        out, bw_core = _conv_im2col(x.data, kernel.data, stride, x.requires_grad)
    out = out + bias.data[None, :, None, None]

    def bw(g):
        gx, gk = bw_core(g)
        return gx, gk, g.sum(axis=(0, 2, 3))

    return _make(out, (x, kernel, bias), bw)


def _conv_im2col(x, K, s, need_dx):
    B, C, H, W = x.shape
    O, _, k, _ = K.shape
    Ho, Wo = conv_output_size(H, k, s), conv_output_size(W, k, s)
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s][:, :, :Ho, :Wo]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * k * k)
    kmat = K.reshape(O, C * k * k)
    out = (cols @ kmat.T).reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2)

    def bw(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, O)
        gk = (g2.T @ cols).reshape(K.shape)
        gx = None
        if need_dx:
            dcols = (g2 @ kmat).reshape(B, Ho, Wo, C, k, k)
            gx = np.zeros_like(x)
            for i in range(k):
                for j in range(k):
                    gx[:, :, i:i + s * (Ho - 1) + 1:s, j:j + s * (Wo - 1) + 1:s] += \
                        dcols[..., i, j].transpose(0, 3, 1, 2)
        return gx, gk

    return out, bw


def _conv_blocked(x, K, s, need_dx):
    # kernel is an m x m grid of stride-sized blocks: fold each s x s input block
    # into channels, one matmul gives every block-offset partial sum at once.
    B, C, H, W = x.shape
    O, _, k, _ = K.shape
    m = k // s
    Ho, Wo = conv_output_size(H, k, s), conv_output_size(W, k, s)
    Hb, Wb = Ho - 1 + m, Wo - 1 + m
    xc = x[:, :, :s * Hb, :s * Wb]
    S = xc.reshape(B, C, Hb, s, Wb, s).transpose(0, 2, 4, 1, 3, 5).reshape(B * Hb * Wb, C * s * s)
    wall = K.reshape(O, C, m, s, m, s).transpose(1, 3, 5, 2, 4, 0).reshape(C * s * s, m * m * O)
    Z = (S @ wall).reshape(B, Hb, Wb, m, m, O)
    acc = np.zeros((B, Ho, Wo, O))
    for di in range(m):
        for dj in range(m):
            acc += Z[:, di:di + Ho, dj:dj + Wo, di, dj, :]
    out = acc.transpose(0, 3, 1, 2)

    def bw(g):
        gt = g.transpose(0, 2, 3, 1)
        dZ = np.zeros((B, Hb, Wb, m, m, O))
        for di in range(m):
            for dj in range(m):
                dZ[:, di:di + Ho, dj:dj + Wo, di, dj, :] = gt
        dZf = dZ.reshape(-1, m * m * O)
        gk = (S.T @ dZf).reshape(C, s, s, m, m, O).transpose(5, 0, 3, 1, 4, 2).reshape(K.shape)
        gx = None
        if need_dx:
            dS = (dZf @ wall.T).reshape(B, Hb, Wb, C, s, s).transpose(0, 3, 1, 4, 2, 5)
            gx = np.zeros_like(x)
            gx[:, :, :s * Hb, :s * Wb] = dS.reshape(B, C, s * Hb, s * Wb)
        return gx, gk

    return out, bw


# ---------------------------------------------------------------- backward

def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def gradients(loss: Tensor) -> dict[int, np.ndarray]:
    """d(loss)/d(leaf) for every leaf reachable from ``loss``, keyed by ``id(leaf)``.

    Pure: nothing on the graph is mutated, so disjoint batches may be
    differentiated concurrently against shared parameters.
    """
    if not isinstance(loss, Tensor) or loss._backward is None:
        raise UsageError("backward called without a recorded forward pass "
                         "(loss does not depend on any parameter, or was built under no_grad)")
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got dims {loss.dims}")
    grads = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, np.ndarray] = {}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            leaves[id(node)] = g
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            grads[key] = grads[key] + pg if key in grads else pg
    return leaves


def backward(loss: Tensor, params=None, accumulate: bool = False):
    """Fill ``.grad`` of every parameter in ``params`` with d(loss)/d(param).

    Grads are reset first unless ``accumulate`` is set. Parameters that the
    loss does not depend on end with an all-zero gradient.
    """
    leaves = gradients(loss)
    if params is None:
        return None
    tensors = list(params.values()) if hasattr(params, "values") else list(params)
    for t in tensors:
        if not accumulate or t.grad is None:
            t.zero_grad()
        g = leaves.get(id(t))
        if g is not None:
            t.grad += g.reshape(t.shape)
    return params
