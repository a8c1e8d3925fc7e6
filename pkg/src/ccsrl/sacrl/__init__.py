"""Soft actor-critic control optimization inside the surrogate's latent space."""
from .agent import (
    ActorParts,
    Critic,
    PolicyNet,
    ReplayBuffer,
    SacAgent,
    SacConfig,
    actor_loss,
    bellman_target,
    critic_loss,
    scale_action,
    squash_to_unit,
    update,
)
from .checkpoint import load_agent, save_agent
from .env import EpisodeResult, LatentEnv, base_case, evaluate_policy, random_baseline, run_policy, simulate_schedule
from .train import EpisodeLog, train_agent

__all__ = [
    "ActorParts",
    "Critic",
    "EpisodeLog",
    "EpisodeResult",
    "LatentEnv",
    "PolicyNet",
    "ReplayBuffer",
    "SacAgent",
    "SacConfig",
    "actor_loss",
    "base_case",
    "bellman_target",
    "critic_loss",
    "evaluate_policy",
    "load_agent",
    "random_baseline",
    "run_policy",
    "save_agent",
    "scale_action",
    "simulate_schedule",
    "squash_to_unit",
    "train_agent",
    "update",
]
