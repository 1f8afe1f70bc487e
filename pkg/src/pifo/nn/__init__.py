"""Small differentiable-computation core: tensors, layers, Adam, checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .optim import AdamState, adam_step
from .params import LayerSpec, ParamSet, apply_layers, conv_trunk, init_params, merge, mlp_layers
from .tensor import Tensor, backward, conv2d, dense, gradients, no_grad

__all__ = [
    "AdamState", "LayerSpec", "ParamSet", "Tensor", "adam_step", "apply_layers", "backward",
    "conv2d", "conv_trunk", "dense", "gradients", "init_params", "load_checkpoint", "merge",
    "mlp_layers", "no_grad", "save_checkpoint",
]
