"""The alternating environment-step / gradient-step training loop."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import ContractError, TrainingError
from .agent import ReplayBuffer, SacAgent, SacConfig, update
from .env import LatentEnv


@dataclass
class EpisodeLog:
    episode: int
    ret: float  # sum_t gamma^t r_t with scaled rewards, t from 1
    npv: float  # dollars, ret / reward_scale * dt
    critic_loss: float
    actor_loss: float


def train_agent(
    env: LatentEnv,
    cfg: SacConfig = SacConfig(),
    agent: SacAgent | None = None,
    callback: Callable[[EpisodeLog], None] | None = None,
) -> tuple[SacAgent, list[EpisodeLog]]:
    """Each iteration collects ``env_steps`` transitions with the stochastic
    policy, then takes ``grad_steps`` updates on minibatches from the buffer."""
    if abs(cfg.gamma - env.params.gamma) > 1e-15:
        raise ContractError("the RL discount must equal the economic depreciation factor")
    agent = agent or SacAgent(env.d_z, env.n_u, cfg)
    buf = ReplayBuffer(cfg.capacity, env.d_z, env.n_u)
    sampler = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(3,)))
    curve: list[EpisodeLog] = []
    z = env.reset()
    t = 0
    for it in range(cfg.episodes):
        ret, disc = 0.0, 1.0
        for _ in range(cfg.env_steps):
            a01, _ = agent.act(z)
            z_next, r, _ = env.step(z, env.control(a01))
            t += 1
            done = t == env.n_steps
            buf.push(z, a01, r, z_next, done)
            disc *= cfg.gamma
            ret += disc * r
            z = z_next
            if done:
                z, t = env.reset(), 0
        losses = []
        if len(buf) >= min(cfg.update_after, cfg.capacity):
            for _ in range(cfg.grad_steps):
                try:
                    info = update(agent, buf.sample(cfg.batch_size, sampler))
                except TrainingError as exc:
                    raise TrainingError(f"iteration {it}: {exc}") from exc
                if not all(np.isfinite(v) for v in info.values()):
                    raise TrainingError(f"iteration {it}: non-finite loss {info}")
                losses.append(info)
        log = EpisodeLog(
            it,
            ret,
            ret / env.reward_scale * env.params.dt_days,
            float(np.mean([l["q1"] + l["q2"] for l in losses])) if losses else float("nan"),
            float(np.mean([l["actor"] for l in losses])) if losses else float("nan"),
        )
        curve.append(log)
        if callback:
            callback(log)
    return agent, curve
