"""Soft actor-critic networks, losses and the replay buffer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, ContractError, ShapeError
from ..ndauto import MLP, Adam, Module, Tensor, as_tensor, frozen, gaussian_head, no_grad, polyak_update
from ..ndauto import ops as T


@dataclass(frozen=True)
class SacConfig:
    gamma: float = 0.986
    alpha: float = 0.2
    tau: float = 0.005
    batch_size: int = 256
    capacity: int = 100_000
    lr: float = 3e-4
    env_steps: int = 20  # per iteration, one episode
    grad_steps: int = 20  # per iteration
    episodes: int = 1000
    reward_scale: float = 1e-3  # per $/day, keeps Bellman targets O(1)
    hidden: tuple[int, ...] = (256, 256)
    update_after: int = 256  # records in the buffer before the first update
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigurationError("gamma must lie in (0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigurationError("tau must lie in (0, 1]")
        if self.alpha < 0:
            raise ConfigurationError("alpha must be nonnegative")
        if min(self.batch_size, self.capacity, self.env_steps) < 1 or self.grad_steps < 0 or self.episodes < 0:
            raise ConfigurationError("batch_size, capacity and env_steps must be positive")
        if self.reward_scale <= 0 or self.lr <= 0:
            raise ConfigurationError("reward_scale and lr must be positive")


class PolicyNet(Module):
    """z -> (mean, log_std) of a tanh-squashed Gaussian over N_u channels."""

    def __init__(self, d_z: int, n_u: int, hidden=(256, 256), rng=None, dtype=np.float32):
        self.n_u = n_u
        self.net = MLP([d_z, *hidden, 2 * n_u], rng=rng, dtype=dtype)

    def __call__(self, z) -> tuple[Tensor, Tensor]:
        out = self.net(z)
        return out[..., : self.n_u], out[..., self.n_u :]


class Critic(Module):
    def __init__(self, d_z: int, n_u: int, hidden=(256, 256), rng=None, dtype=np.float32):
        self.net = MLP([d_z + n_u, *hidden, 1], rng=rng, dtype=dtype)

    def __call__(self, z, a) -> Tensor:
        q = self.net(T.concat([as_tensor(z), as_tensor(a)], axis=-1))
        return T.reshape(q, q.shape[:-1])


def squash_to_unit(a_tanh):
    """(-1, 1) -> (0, 1), the normalized action stored in the buffer."""
    return 0.5 * (a_tanh + 1.0)


def scale_action(a01, low, high):
    """Normalized action -> physical control; the result is clipped to the
    bounds so rounding can never leave them."""
    a01 = np.asarray(a01, dtype=np.float64)
    return np.clip(low + a01 * (high - low), low, high)


class SacAgent:
    """Actor, twin critics and their polyak-averaged targets."""

    def __init__(self, d_z: int, n_u: int, cfg: SacConfig = SacConfig(), dtype=np.float32):
        self.cfg = cfg
        self.d_z, self.n_u = d_z, n_u
        init = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
        self.policy = PolicyNet(d_z, n_u, cfg.hidden, init, dtype)
        self.q1 = Critic(d_z, n_u, cfg.hidden, init, dtype)
        self.q2 = Critic(d_z, n_u, cfg.hidden, init, dtype)
        self.q1_targ = Critic(d_z, n_u, cfg.hidden, init, dtype)
        self.q2_targ = Critic(d_z, n_u, cfg.hidden, init, dtype)
        polyak_update(self.q1, self.q1_targ, 1.0)
        polyak_update(self.q2, self.q2_targ, 1.0)
        self.rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(2,)))
        self.pi_opt = Adam(self.policy.named_parameters(), lr=cfg.lr)
        self.q_opt = Adam(
            [("q1." + k, p) for k, p in self.q1.named_parameters()]
            + [("q2." + k, p) for k, p in self.q2.named_parameters()],
            lr=cfg.lr,
        )
        self.updates = 0

    @property
    def dtype(self):
        return self.policy.net.layers[0].weight.dtype

    def sample(self, z, deterministic: bool = False, rng=None) -> tuple[Tensor, Tensor]:
        """Squashed action in (-1, 1) and its log-density."""
        z = as_tensor(z)
        if z.shape[-1] != self.d_z:
            raise ShapeError(f"latent state has length {z.shape[-1]}, expected {self.d_z}")
        mean, log_std = self.policy(z)
        return gaussian_head(mean, log_std, rng if rng is not None else self.rng, deterministic=deterministic)

    def act(self, z, deterministic: bool = False, rng=None) -> tuple[np.ndarray, float]:
        """Normalized action in [0, 1]^N_u and log-probability, no gradient."""
        with no_grad():
            a, logp = self.sample(np.asarray(z, dtype=self.dtype), deterministic, rng)
        return np.clip(squash_to_unit(a.data.astype(np.float64)), 0.0, 1.0), float(np.sum(logp.data))

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {}
        for name in ("policy", "q1", "q2", "q1_targ", "q2_targ"):
            out.update({f"{name}.{k}": v for k, v in getattr(self, name).state_dict().items()})
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name in ("policy", "q1", "q2", "q1_targ", "q2_targ"):
            pre = name + "."
            getattr(self, name).load_state_dict({k[len(pre) :]: v for k, v in state.items() if k.startswith(pre)})


# ------------------------------------------------------------------ losses
def _check_batch(batch: dict) -> int:
    n = len(batch["r"])
    if n == 0:
        raise ContractError("empty batch")
    return n


def bellman_target(r, done, q1_next, q2_next, logp_next, gamma: float, alpha: float):
    """r + gamma (1 - done) (min(Q1', Q2') - alpha log pi(a'|z'))."""
    soft = np.minimum(q1_next, q2_next) - alpha * np.asarray(logp_next)
    return np.asarray(r) + gamma * (1.0 - np.asarray(done)) * soft


def critic_loss(agent: SacAgent, batch: dict, gamma: float | None = None, alpha: float | None = None, rng=None):
    """Mean squared Bellman errors of both critics against a constant target.

    Returns (loss_q1, loss_q2, target).
    """
    _check_batch(batch)
    gamma = agent.cfg.gamma if gamma is None else gamma
    alpha = agent.cfg.alpha if alpha is None else alpha
    dt = agent.dtype
    z, u = batch["z"].astype(dt), batch["u"].astype(dt)
    with no_grad():
        a_next, logp_next = agent.sample(batch["z_next"].astype(dt), rng=rng)
        zn = batch["z_next"].astype(dt)
        q1n = agent.q1_targ(zn, squash_to_unit(a_next)).data
        q2n = agent.q2_targ(zn, squash_to_unit(a_next)).data
        target = bellman_target(batch["r"], batch["done"], q1n, q2n, logp_next.data, gamma, alpha).astype(dt)
    l1 = T.mean(T.square(agent.q1(z, u) - target))
    l2 = T.mean(T.square(agent.q2(z, u) - target))
    return l1, l2, target


@dataclass
class ActorParts:
    loss: Tensor
    q_term: float  # mean min-Q
    logp: float  # mean log pi


def actor_loss(agent: SacAgent, batch: dict, alpha: float | None = None, rng=None) -> ActorParts:
    """-mean(min_i Q_i(z, a_pi) - alpha log pi(a_pi|z)); critics frozen."""
    _check_batch(batch)
    alpha = agent.cfg.alpha if alpha is None else alpha
    z = batch["z"].astype(agent.dtype)
    a, logp = agent.sample(z, rng=rng)
    with frozen(agent.q1.parameters() + agent.q2.parameters()):
        a01 = squash_to_unit(a)
        q = T.minimum(agent.q1(z, a01), agent.q2(z, a01))
    loss = -T.mean(q - logp * alpha)
    return ActorParts(loss, float(np.mean(q.data)), float(np.mean(logp.data)))


def update(agent: SacAgent, batch: dict) -> dict:
    """One critic step, one actor step and a polyak update of the targets."""
    l1, l2, _ = critic_loss(agent, batch)
    agent.q_opt.zero_grad()
    (l1 + l2).backward()
    agent.q_opt.step()
    parts = actor_loss(agent, batch)
    agent.pi_opt.zero_grad()
    parts.loss.backward()
    agent.pi_opt.step()
    polyak_update(agent.q1, agent.q1_targ, agent.cfg.tau)
    polyak_update(agent.q2, agent.q2_targ, agent.cfg.tau)
    agent.updates += 1
    return {"q1": float(l1.data), "q2": float(l2.data), "actor": float(parts.loss.data), "logp": parts.logp}


# ------------------------------------------------------------------ buffer
@dataclass
class ReplayBuffer:
    """Fixed-capacity FIFO of (z, u, r, z_next, done) records."""

    capacity: int
    d_z: int
    n_u: int
    _z: np.ndarray = field(init=False, repr=False)
    _u: np.ndarray = field(init=False, repr=False)
    _r: np.ndarray = field(init=False, repr=False)
    _zn: np.ndarray = field(init=False, repr=False)
    _d: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.capacity < 1:
            raise ConfigurationError("replay capacity must be positive")
        self._z = np.zeros((self.capacity, self.d_z))
        self._u = np.zeros((self.capacity, self.n_u))
        self._r = np.zeros(self.capacity)
        self._zn = np.zeros((self.capacity, self.d_z))
        self._d = np.zeros(self.capacity)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, z, u, r, z_next, done: bool) -> None:
        rec = [np.asarray(z, float), np.asarray(u, float), float(r), np.asarray(z_next, float)]
        if not all(np.all(np.isfinite(v)) for v in rec):
            raise ContractError("replay records must be finite")
        if np.any(rec[1] < 0) or np.any(rec[1] > 1):
            raise ContractError("stored actions must be normalized to [0, 1]")
        i = self._next
        self._z[i], self._u[i], self._r[i], self._zn[i], self._d[i] = rec[0], rec[1], rec[2], rec[3], float(done)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _order(self) -> np.ndarray:
        """Slots from oldest to newest."""
        start = self._next if self._size == self.capacity else 0
        return (start + np.arange(self._size)) % self.capacity

    def records(self) -> dict:
        idx = self._order()
        return self._take(idx)

    def _take(self, idx) -> dict:
        return {"z": self._z[idx], "u": self._u[idx], "r": self._r[idx], "z_next": self._zn[idx], "done": self._d[idx]}

    def sample(self, n: int, rng: np.random.Generator) -> dict:
        if self._size == 0:
            raise ContractError("cannot sample from an empty buffer")
        return self._take(rng.integers(0, self._size, size=n))
