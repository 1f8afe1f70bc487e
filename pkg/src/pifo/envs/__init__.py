"""Built-in control tasks and their binary-frame renderer."""

from .core import ENV_SPECS, EnvSpec, EnvState, StepResult, get_spec, goal_distance, reset, step
from .demo_io import DemoSet, read_demos, write_demos
from .render import render, render_layers, render_mask

__all__ = [
    "ENV_SPECS", "DemoSet", "EnvSpec", "EnvState", "StepResult", "get_spec", "goal_distance",
    "read_demos", "render", "render_layers", "render_mask", "reset", "step", "write_demos",
]
