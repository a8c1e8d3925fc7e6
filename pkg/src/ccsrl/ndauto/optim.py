"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from ..errors import ConfigurationError, ContractError, TrainingError
from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


@numba.njit(cache=True)
def _adam_kernel(p, g, m, v, b1, a1, b2, a2, step_size, inv_c2, eps, tiny):
    # one pass over memory; the arrays are flat views, a1 = 1 - b1, a2 = 1 - b2.
    # Moments below the smallest normal number are flushed to zero: subnormal
    # arithmetic is very slow on x86 and such moments cannot move a parameter.
    for i in range(p.size):
        gi = g[i]
        mi = b1 * m[i] + a1 * gi
        vi = b2 * v[i] + a2 * gi * gi
        if abs(mi) < tiny:
            mi = 0.0 * mi
        if vi < tiny:
            vi = 0.0 * vi
        m[i] = mi
        v[i] = vi
        p[i] -= step_size * mi / (np.sqrt(vi * inv_c2) + eps)


class Adam:
    def __init__(self, named_params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr < 0 or not (0 <= beta1 < 1) or not (0 <= beta2 < 1) or eps <= 0:
            raise ConfigurationError("invalid Adam hyperparameters")
        self.params: dict[str, Tensor] = dict(named_params)
        self.state = AdamState(lr, beta1, beta2, eps)
        for k, p in self.params.items():
            self.state.m[k] = np.zeros_like(p.data)
            self.state.v[k] = np.zeros_like(p.data)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = float(value)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        """One update from the accumulated ``.grad`` of every parameter.

        A parameter with no gradient is treated as having a zero gradient.
        """
        s = self.state
        grads = {}
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            elif g.shape != p.shape:
                raise ContractError(f"gradient of {k} has shape {g.shape}, parameter {p.shape}")
            elif not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for parameter {k!r}")
            grads[k] = g
        s.step += 1
        b1, b2 = s.beta1, s.beta2
        c1 = 1.0 - b1**s.step
        c2 = 1.0 - b2**s.step
        step_size = s.lr / c1
        for k, p in self.params.items():
            if not p.data.flags.c_contiguous:
                p.data = np.ascontiguousarray(p.data)
            g = np.ascontiguousarray(grads[k], dtype=p.dtype)
            f = p.dtype.type  # scalars in the parameter precision
            _adam_kernel(
                p.data.reshape(-1), g.reshape(-1), s.m[k].reshape(-1), s.v[k].reshape(-1),
                f(b1), f(1.0 - b1), f(b2), f(1.0 - b2), f(step_size), f(1.0 / c2), f(s.eps), f(np.finfo(p.dtype).tiny),
            )
