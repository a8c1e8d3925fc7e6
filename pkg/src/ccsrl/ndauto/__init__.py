"""Dense tensors with reverse-mode differentiation, layers and Adam."""
from . import tensor as ops
from .checkpoint import load_params, save_params
from .dist import LOG_STD_MAX, LOG_STD_MIN, gaussian_head
from .nn import MLP, Dense, Module, glorot_uniform, polyak_update
from .optim import Adam, AdamState
from .tensor import Tensor, as_tensor, frozen, no_grad

__all__ = [
    "Adam",
    "AdamState",
    "Dense",
    "LOG_STD_MAX",
    "LOG_STD_MIN",
    "MLP",
    "Module",
    "Tensor",
    "as_tensor",
    "frozen",
    "gaussian_head",
    "glorot_uniform",
    "load_params",
    "no_grad",
    "ops",
    "polyak_update",
    "save_params",
]
