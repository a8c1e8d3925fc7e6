"""Surrogate latent environment and evaluation on either environment."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import econ
from ..datapipe import Normalizer, sample_schedule
from ..e2co import E2coModel
from ..ndauto import no_grad
from ..seeding import stream
from ..simcore import ControlVector, ObservationVector, ReservoirModel, Simulator, StateField
from .agent import SacAgent, scale_action


class LatentEnv:
    """Episodes of ``n_steps`` surrogate steps, always reset to the encoding
    of the same initial state."""

    def __init__(
        self,
        surrogate: E2coModel,
        normalizer: Normalizer,
        x0,
        bounds,
        params: econ.EconParams = econ.EconParams(),
        reward_scale: float = 1e-3,
        n_steps: int = 20,
    ):
        self.surrogate = surrogate
        self.normalizer = normalizer
        self.params = params
        self.reward_scale = float(reward_scale)
        self.n_steps = int(n_steps)
        self.n_prod, self.n_inj = normalizer.n_prod, normalizer.n_inj
        self.low, self.high = bounds.arrays(self.n_prod, self.n_inj)
        if isinstance(x0, StateField):
            x0 = x0.flatten()
        x0 = np.asarray(x0, dtype=float)
        with no_grad():
            self.z0 = surrogate.encode(normalizer.norm(x0, "x").astype(surrogate.dtype)).data.astype(np.float64)

    @property
    def d_z(self) -> int:
        return self.z0.size

    @property
    def n_u(self) -> int:
        return self.low.size

    def reset(self) -> np.ndarray:
        return self.z0.copy()

    def control(self, a01) -> ControlVector:
        return ControlVector.from_array(scale_action(a01, self.low, self.high), self.n_prod)

    def predict(self, z, u: ControlVector) -> tuple[np.ndarray, ObservationVector]:
        """Latent transition and physical observation for a physical control."""
        dt = self.surrogate.dtype
        un = self.normalizer.norm(u.to_array(), "u").astype(dt)
        with no_grad():
            zc = np.asarray(z, dtype=dt)
            z_next = self.surrogate.transition(zc, un)
            y = self.surrogate.observe(z_next, zc, un).data
        y = self.normalizer.denorm(y.astype(np.float64), "y")
        return z_next.data.astype(np.float64), ObservationVector.from_array(y, self.n_prod)

    def dollar_rate(self, u: ControlVector, y: ObservationVector) -> float:
        """Reward in $/day. Surrogate rates can dip slightly below zero; they
        are read as zero since a producer cannot inject."""
        y = ObservationVector(np.maximum(y.q_w, 0.0), np.maximum(y.q_g, 0.0), y.p_wf)
        return econ.reward(u, y, self.params)

    def step(self, z, u: ControlVector) -> tuple[np.ndarray, float, ObservationVector]:
        """(z_next, scaled reward, physical observation)."""
        z_next, y = self.predict(z, u)
        return z_next, self.dollar_rate(u, y) * self.reward_scale, y


@dataclass
class EpisodeResult:
    npv: float  # dollars
    rewards: np.ndarray  # $/day per period
    schedule: list[ControlVector]
    observations: list[ObservationVector]

    def schedule_array(self) -> np.ndarray:
        return np.stack([u.to_array() for u in self.schedule])


def run_policy(agent: SacAgent, env: LatentEnv, deterministic: bool = True, rng=None) -> EpisodeResult:
    """One surrogate episode; the NPV uses the surrogate's own observations."""
    z = env.reset()
    sched, obs, rewards = [], [], []
    for _ in range(env.n_steps):
        a01, _ = agent.act(z, deterministic=deterministic, rng=rng)
        u = env.control(a01)
        z, r, y = env.step(z, u)
        sched.append(u)
        obs.append(y)
        rewards.append(r / env.reward_scale)
    rewards = np.array(rewards)
    return EpisodeResult(econ.npv(rewards, env.params), rewards, sched, obs)


def simulate_schedule(
    model: ReservoirModel,
    schedule,
    params: econ.EconParams = econ.EconParams(),
    sim: Simulator | None = None,
) -> EpisodeResult:
    """Run a control schedule on the full-order simulator and price it."""
    sim = sim or Simulator(model)
    traj = sim.run_episode(list(schedule), params.dt_days)
    obs = [o for _, o in traj]
    rewards = np.array([econ.reward(u, y, params) for u, y in zip(schedule, obs)])
    return EpisodeResult(econ.npv(rewards, params), rewards, list(schedule), obs)


def evaluate_policy(agent: SacAgent, env: LatentEnv, model: ReservoirModel | None = None, sim=None) -> dict:
    """Deterministic policy on the surrogate and, when ``model`` is given, the
    same control schedule replayed open loop on the full-order simulator."""
    out = {"surrogate": run_policy(agent, env, deterministic=True)}
    if model is not None:
        out["full_order"] = simulate_schedule(model, out["surrogate"].schedule, env.params, sim)
    return out


def base_case(model: ReservoirModel, params: econ.EconParams = econ.EconParams(), n_steps: int = 20, sim=None):
    """Midpoint controls held for the whole horizon."""
    u = model.bounds.midpoint(len(model.producers), len(model.injectors))
    return simulate_schedule(model, [u] * n_steps, params, sim)


def random_baseline(model: ReservoirModel, n: int = 50, seed: int = 0, params: econ.EconParams = econ.EconParams(),
                    n_steps: int = 20, sim=None) -> np.ndarray:
    """NPVs of ``n`` uniformly random schedules on the full-order simulator."""
    sim = sim or Simulator(model)
    npvs = []
    for k in range(n):
        sched = sample_schedule(stream(seed, "baseline", k), model.bounds, len(model.producers),
                                len(model.injectors), n_steps)
        npvs.append(simulate_schedule(model, sched, params, sim).npv)
    return np.array(npvs)
