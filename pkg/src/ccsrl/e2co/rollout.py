"""Recursive latent prediction and held-out error metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..datapipe import Dataset, Normalizer
from ..errors import ShapeError
from ..ndauto import no_grad
from ..simcore import ControlVector, StateField
from .model import E2coModel


def latent_rollout(model: E2coModel, x0n, un, decode: bool = True):
    """Normalized rollout. ``x0n`` is (..., 2 N_b) and ``un`` is (..., N_t, N_u).

    Returns (states (..., N_t, 2 N_b) or None, observations (..., N_t, N_y),
    latents (..., N_t + 1, d_z)). The state is never re-encoded.
    """
    x0n = np.asarray(x0n)
    un = np.asarray(un)
    if un.ndim < 2 or un.shape[:-2] != x0n.shape[:-1]:
        raise ShapeError(f"controls {un.shape} do not match initial states {x0n.shape}")
    dtype = model.dtype
    with no_grad():
        z = model.encode(x0n.astype(dtype))
        latents, obs = [z.data], []
        for t in range(un.shape[-2]):
            u = un[..., t, :].astype(dtype)
            z_next = model.transition(z, u)
            obs.append(model.observe(z_next, z, u).data)
            latents.append(z_next.data)
            z = z_next
        lat = np.stack(latents, axis=-2)
        states = model.decode(lat[..., 1:, :]).data if decode else None
    return states, np.stack(obs, axis=-2), lat


@dataclass
class Rollout:
    states: np.ndarray  # (N_t, 2 N_b) physical: pressures then z_co2
    observations: np.ndarray  # (N_t, N_y) physical
    latents: np.ndarray  # (N_t + 1, d_z)


def rollout(model: E2coModel, normalizer: Normalizer, x0, schedule) -> Rollout:
    """Physical-unit rollout from an initial state and a control schedule."""
    if isinstance(x0, StateField):
        x0 = x0.flatten()
    u = np.stack([c.to_array() if isinstance(c, ControlVector) else np.asarray(c, float) for c in schedule])
    x, y, lat = latent_rollout(model, normalizer.norm(x0, "x"), normalizer.norm(u, "u"))
    return Rollout(normalizer.denorm(x, "x"), normalizer.denorm(y, "y"), lat)


@dataclass
class RolloutErrors:
    pressure_rel: np.ndarray  # (N_t,) mean over cells and trajectories of |p^ - p| / p
    z_abs: np.ndarray  # (N_t,) mean |z^ - z|
    obs_abs: np.ndarray  # (N_t,) mean absolute normalized observation error
    recon: float  # mean |x_t - P(Q(x_t))| in normalized units

    @property
    def mean_pressure_rel(self) -> float:
        return float(self.pressure_rel.mean())

    @property
    def mean_z_abs(self) -> float:
        return float(self.z_abs.mean())

    def monotone_growth(self) -> bool:
        return bool(self.pressure_rel[-1] >= self.pressure_rel[0] and self.z_abs[-1] >= self.z_abs[0])


def rollout_errors(model: E2coModel, ds: Dataset) -> RolloutErrors:
    """Full-horizon rollouts of every trajectory in ``ds`` against its truth."""
    nz = ds.normalizer()
    nb = ds.n_cells
    k, nt = ds.n_traj, ds.n_steps
    x0 = ds.x.reshape(k, nt, -1)[:, 0]
    u = ds.u.reshape(k, nt, -1)
    truth = nz.denorm(ds.x_next.reshape(k, nt, -1), "x")
    pred_n, y_n, _ = latent_rollout(model, x0, u)
    pred = nz.denorm(pred_n, "x")
    p_rel = np.abs(pred[..., :nb] - truth[..., :nb]) / np.abs(truth[..., :nb])
    z_abs = np.abs(pred[..., nb:] - truth[..., nb:])
    y_abs = np.abs(y_n - ds.y.reshape(k, nt, -1))
    with no_grad():
        recon = np.abs(model.decode(model.encode(ds.x)).data - ds.x).mean()
    return RolloutErrors(p_rel.mean(axis=(0, 2)), z_abs.mean(axis=(0, 2)), y_abs.mean(axis=(0, 2)), float(recon))
