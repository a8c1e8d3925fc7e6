"""Embed-to-control-and-observe surrogate with locally linear latent dynamics.

    z_t       = Q(x_t)
    z_{t+1}^  = A(z_t) z_t + B(z_t) u_t
    y_{t+1}^  = C(z_t) z_{t+1}^ + D(z_t) u_t
    x^        = P(z)

A, B come from one ReLU trunk on z_t, C, D from a second; each matrix is a
linear head reshaped to its block size.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigurationError, ShapeError, TrainingError
from ..ndauto import MLP, Dense, Module, Tensor, as_tensor
from ..ndauto import ops as T


@dataclass(frozen=True)
class E2coConfig:
    n_state: int  # 2 * N_b
    n_controls: int
    n_outputs: int
    d_z: int = 50
    hidden: tuple[int, ...] = (512, 256)
    trunk: int = 200

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if min(self.n_state, self.n_controls, self.n_outputs, self.d_z, self.trunk) < 1:
            raise ConfigurationError("all E2CO dimensions must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass(frozen=True)
class LossWeights:
    rec: float = 1.0
    kl: float = 0.01
    yobs: float = 1.0

    def __post_init__(self):
        if self.rec <= 0 or self.kl < 0 or self.yobs < 0:
            raise ConfigurationError("loss weights need rec > 0 and kl, yobs >= 0")


class E2coModel(Module):
    def __init__(self, cfg: E2coConfig, rng: np.random.Generator | None = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        dz, nu, ny, h = cfg.d_z, cfg.n_controls, cfg.n_outputs, cfg.trunk
        self.encoder = MLP([cfg.n_state, *cfg.hidden, dz], rng=rng, dtype=dtype)
        self.decoder = MLP([dz, *reversed(cfg.hidden), cfg.n_state], rng=rng, dtype=dtype)
        self.trans_trunk = Dense(dz, h, "relu", rng=rng, dtype=dtype)
        self.head_A = Dense(h, dz * dz, rng=rng, dtype=dtype)
        self.head_B = Dense(h, dz * nu, rng=rng, dtype=dtype)
        self.obs_trunk = Dense(dz, h, "relu", rng=rng, dtype=dtype)
        self.head_C = Dense(h, ny * dz, rng=rng, dtype=dtype)
        self.head_D = Dense(h, ny * nu, rng=rng, dtype=dtype)

    @property
    def dtype(self):
        return self.encoder.layers[0].weight.dtype

    # ------------------------------------------------------------ pieces
    def _check(self, v, n: int, what: str) -> Tensor:
        v = as_tensor(v)
        if v.shape[-1] != n:
            raise ShapeError(f"{what}: expected trailing length {n}, got shape {v.shape}")
        return v

    def encode(self, x) -> Tensor:
        return self.encoder(self._check(x, self.cfg.n_state, "encode"))

    def decode(self, z) -> Tensor:
        return self.decoder(self._check(z, self.cfg.d_z, "decode"))

    def transition_matrices(self, z) -> tuple[Tensor, Tensor]:
        z = self._check(z, self.cfg.d_z, "transition")
        h = self.trans_trunk(z)
        lead = z.shape[:-1]
        A = T.reshape(self.head_A(h), lead + (self.cfg.d_z, self.cfg.d_z))
        B = T.reshape(self.head_B(h), lead + (self.cfg.d_z, self.cfg.n_controls))
        return A, B

    def observation_matrices(self, z) -> tuple[Tensor, Tensor]:
        z = self._check(z, self.cfg.d_z, "observe")
        h = self.obs_trunk(z)
        lead = z.shape[:-1]
        C = T.reshape(self.head_C(h), lead + (self.cfg.n_outputs, self.cfg.d_z))
        D = T.reshape(self.head_D(h), lead + (self.cfg.n_outputs, self.cfg.n_controls))
        return C, D

    @staticmethod
    def _apply(M: Tensor, v: Tensor) -> Tensor:
        """Row-wise matrix-vector product for stacked matrices."""
        if v.ndim == 1:
            return T.matmul(M, v)
        col = T.reshape(v, v.shape + (1,))
        return T.reshape(T.matmul(M, col), v.shape[:-1] + (M.shape[-2],))

    def transition(self, z, u) -> Tensor:
        z = self._check(z, self.cfg.d_z, "transition")
        u = self._check(u, self.cfg.n_controls, "transition")
        A, B = self.transition_matrices(z)
        return self._apply(A, z) + self._apply(B, u)

    def observe(self, z_next, z_curr, u) -> Tensor:
        z_next = self._check(z_next, self.cfg.d_z, "observe")
        u = self._check(u, self.cfg.n_controls, "observe")
        C, D = self.observation_matrices(z_curr)
        return self._apply(C, z_next) + self._apply(D, u)


@dataclass
class LossParts:
    total: Tensor
    rec: float
    kl: float
    yobs: float

    def as_dict(self) -> dict:
        return {"total": float(self.total.data), "rec": self.rec, "kl": self.kl, "yobs": self.yobs}


def total_loss(model: E2coModel, x_t, u_t, x_next, y_next, weights: LossWeights = LossWeights()) -> LossParts:
    """Batch mean of the per-sample weighted sum of Euclidean norms:

    rec  = |x_t - P(z_t)| + |x_{t+1} - P(z^_{t+1})|
    kl   = |z_t| + |z_{t+1} - z^_{t+1}|,  z_{t+1} = Q(x_{t+1})
    yobs = |y_{t+1} - y^_{t+1}|
    """
    x_t, x_next = as_tensor(x_t), as_tensor(x_next)
    if x_t.ndim == 1:
        x_t, x_next = T.reshape(x_t, (1, -1)), T.reshape(x_next, (1, -1))
        u_t, y_next = np.reshape(u_t, (1, -1)), np.reshape(y_next, (1, -1))
    n = x_t.shape[0]
    if n == 0:
        raise ShapeError("empty batch")
    # encode/decode both time levels in one pass
    z_both = model.encode(T.concat([x_t, x_next], axis=0))
    z_t, z_next = z_both[:n], z_both[n:]
    z_hat = model.transition(z_t, u_t)
    x_rec = model.decode(T.concat([z_t, z_hat], axis=0))
    y_hat = model.observe(z_hat, z_t, u_t)

    rec = T.norm(x_rec[:n] - x_t) + T.norm(x_rec[n:] - x_next)
    kl = T.norm(z_t) + T.norm(z_next - z_hat)
    yobs = T.norm(as_tensor(y_next) - y_hat)
    rec_m, kl_m, y_m = T.mean(rec), T.mean(kl), T.mean(yobs)
    total = rec_m * weights.rec + kl_m * weights.kl + y_m * weights.yobs
    parts = LossParts(total, float(rec_m.data), float(kl_m.data), float(y_m.data))
    for name, val in (("rec", parts.rec), ("kl", parts.kl), ("yobs", parts.yobs)):
        if not np.isfinite(val):
            raise TrainingError(f"non-finite {name} loss component")
    return parts
