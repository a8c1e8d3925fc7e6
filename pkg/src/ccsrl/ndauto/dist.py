"""Reparameterized (squashed) Gaussian policy head."""
from __future__ import annotations

import math

import numpy as np

from ..errors import ShapeError
from . import tensor as T
from .tensor import Tensor

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
TANH_EPS = 1e-6
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def gaussian_head(
    mean: Tensor,
    log_std: Tensor,
    rng: np.random.Generator | int | None = None,
    squash: bool = True,
    deterministic: bool = False,
) -> tuple[Tensor, Tensor]:
    """Sample ``a = tanh(mean + exp(log_std) * eps)`` and its log-density.

    The log-density is summed over the last axis and includes the
    ``log(1 - tanh^2 + 1e-6)`` change-of-variables term when squashing.
    In deterministic mode the action is ``tanh(mean)`` and the
    log-probability is defined as zero, so the entropy bonus vanishes.
    """
    mean, log_std = T.as_tensor(mean), T.as_tensor(log_std)
    if mean.shape != log_std.shape:
        raise ShapeError(f"mean {mean.shape} and log_std {log_std.shape} differ")
    if deterministic:
        a = T.tanh(mean) if squash else mean
        return a, Tensor(np.zeros(mean.shape[:-1], dtype=mean.dtype))
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    ls = T.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
    eps = rng.standard_normal(mean.shape).astype(mean.dtype)
    pre = mean + T.exp(ls) * eps
    logp = (-0.5 * eps * eps - _HALF_LOG_2PI) - ls
    if squash:
        a = T.tanh(pre)
        logp = logp - T.log(1.0 - T.square(a) + TANH_EPS)
    else:
        a = pre
    return a, T.tsum(logp, axis=-1)
