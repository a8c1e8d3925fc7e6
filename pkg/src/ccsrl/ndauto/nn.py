"""Layers, parameter containers and weight initialization."""
from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np

from ..errors import ConfigurationError, ContractError
from . import tensor as T
from .tensor import Tensor

ACTIVATIONS = {
    "identity": lambda x: x,
    "relu": T.relu,
    "tanh": T.tanh,
    "softplus": T.softplus,
}


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int, dtype=np.float32) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(dtype)


class Module:
    """Anything holding named parameters, directly or in child modules."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in vars(self).items():
            if isinstance(val, Tensor):
                yield prefix + key, val
            elif isinstance(val, Module):
                yield from val.named_parameters(f"{prefix}{key}.")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ContractError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in own.items():
            v = np.asarray(state[k])
            if v.shape != p.shape:
                raise ContractError(f"parameter {k}: shape {v.shape} != {p.shape}")
            p.data = v.astype(p.dtype).copy()

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self


class Dense(Module):
    """y = act(x W^T + b), W shaped (out, in)."""

    def __init__(self, n_in: int, n_out: int, activation: str = "identity", rng=None, dtype=np.float32):
        if activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Tensor(glorot_uniform(rng, n_out, n_in, dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out, dtype=dtype), requires_grad=True)
        self.activation = activation

    def __call__(self, x) -> Tensor:
        return ACTIVATIONS[self.activation](T.linear(x, self.weight, self.bias))


class MLP(Module):
    def __init__(
        self,
        sizes: Sequence[int],
        hidden: str = "relu",
        output: str = "identity",
        rng=None,
        dtype=np.float32,
    ):
        if len(sizes) < 2:
            raise ConfigurationError("an MLP needs at least input and output sizes")
        rng = rng if rng is not None else np.random.default_rng(0)
        n = len(sizes) - 1
        self.layers = [
            Dense(sizes[i], sizes[i + 1], hidden if i < n - 1 else output, rng=rng, dtype=dtype) for i in range(n)
        ]
        self.sizes = tuple(int(s) for s in sizes)

    def __call__(self, x) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


def polyak_update(online: Module, target: Module, tau: float) -> None:
    """target <- tau * online + (1 - tau) * target, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ConfigurationError(f"tau must lie in [0, 1], got {tau}")
    src = dict(online.named_parameters())
    dst = dict(target.named_parameters())
    if src.keys() != dst.keys():
        raise ContractError("online and target networks have different parameters")
    for k, p in src.items():
        q = dst[k]
        if q.shape != p.shape:
            raise ContractError(f"polyak: {k} shapes {p.shape} and {q.shape} differ")
        if tau == 1.0:
            q.data[...] = p.data
        elif tau > 0.0:
            q.data *= 1.0 - tau
            q.data += tau * p.data
