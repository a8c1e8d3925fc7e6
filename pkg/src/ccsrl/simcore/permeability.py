"""Log-normal permeability fields from smoothed white noise."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..errors import ConfigurationError
from .model import GridSpec


def gaussian_kernel(corr_len_cells: float) -> np.ndarray:
    """Isotropic Gaussian kernel with unit L2 norm (so unit-variance noise
    stays unit-variance after convolution)."""
    if corr_len_cells <= 0:
        return np.ones((1, 1))
    half = int(np.ceil(3.0 * corr_len_cells))
    r = np.arange(-half, half + 1)
    xx, yy = np.meshgrid(r, r)
    k = np.exp(-(xx**2 + yy**2) / (2.0 * corr_len_cells**2))
    return k / np.sqrt(np.sum(k**2))


def generate_permeability(
    seed: int,
    mean_log_md: float,
    std_log_md: float,
    corr_len_cells: float,
    grid: GridSpec,
) -> np.ndarray:
    """Permeability in mD, shape ``grid.shape``.

    The log-field is standardized to the requested sample mean and standard
    deviation before exponentiation.
    """
    if grid.nx <= 0 or grid.ny <= 0:
        raise ConfigurationError("grid must have positive size")
    if std_log_md < 0 or corr_len_cells < 0:
        raise ConfigurationError("std and correlation length must be nonnegative")
    if std_log_md == 0:
        return np.full(grid.shape, np.exp(mean_log_md))
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(grid.shape)
    smooth = ndimage.convolve(noise, gaussian_kernel(corr_len_cells), mode="wrap")
    smooth = (smooth - smooth.mean()) / smooth.std()
    return np.exp(mean_log_md + std_log_md * smooth)
