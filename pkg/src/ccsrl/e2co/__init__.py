"""Embed-to-control-and-observe surrogate: model, loss, training and rollout."""
from .checkpoint import load_e2co, save_e2co, sidecar_path
from .model import E2coConfig, E2coModel, LossParts, LossWeights, total_loss
from .rollout import Rollout, RolloutErrors, latent_rollout, rollout, rollout_errors
from .train import EpochRecord, TrainConfig, evaluate_loss, train

__all__ = [
    "E2coConfig",
    "E2coModel",
    "EpochRecord",
    "LossParts",
    "LossWeights",
    "Rollout",
    "RolloutErrors",
    "TrainConfig",
    "evaluate_loss",
    "latent_rollout",
    "load_e2co",
    "rollout",
    "rollout_errors",
    "save_e2co",
    "sidecar_path",
    "total_loss",
    "train",
]
