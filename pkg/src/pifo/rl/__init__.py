"""Policy optimization: rollouts, advantage estimation and clipped-surrogate updates."""

from .config import TrainConfig, config_from_text, config_to_text, load_config, save_config
from .gae import AdvantageEstimate, compute_gae, gae, normalize
from .ppo import PPODiagnostics, ppo_update, ppo_update_batch, surrogate_loss
from .rollout import EnvEnsemble, RolloutBatch, collect_rollout

__all__ = [
    "AdvantageEstimate", "EnvEnsemble", "PPODiagnostics", "RolloutBatch", "TrainConfig",
    "collect_rollout", "compute_gae", "config_from_text", "config_to_text", "gae",
    "load_config", "normalize", "ppo_update", "ppo_update_batch", "save_config", "surrogate_loss",
]
