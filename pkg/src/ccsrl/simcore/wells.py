"""Peaceman well model."""
from __future__ import annotations

import math

from ..errors import ConfigurationError
from .model import GridSpec, WellSpec


def equivalent_radius(dx: float, dy: float, kx: float, ky: float) -> float:
    """Peaceman's equivalent radius for an anisotropic rectangular cell."""
    a = math.sqrt(ky / kx)
    b = math.sqrt(kx / ky)
    num = 0.28 * math.sqrt(a * dx**2 + b * dy**2)
    return num / (a**0.5 + b**0.5)


def peaceman_index(cell_perm: float, grid: GridSpec, well: WellSpec, perm_y: float | None = None) -> float:
    """Geometric well index 2*pi*k*h / (ln(r_eq/r_w) + s), in mD*ft."""
    kx = float(cell_perm)
    ky = kx if perm_y is None else float(perm_y)
    if kx <= 0 or ky <= 0:
        raise ConfigurationError(f"well {well.id}: permeability must be positive")
    r_eq = equivalent_radius(grid.dx, grid.dy, kx, ky)
    if r_eq <= well.radius:
        raise ConfigurationError(
            f"well {well.id}: equivalent radius {r_eq:.4g} ft does not exceed well radius {well.radius} ft"
        )
    denom = math.log(r_eq / well.radius) + well.skin
    if denom <= 0:
        raise ConfigurationError(f"well {well.id}: ln(r_eq/r_w) + skin must be positive")
    k_eff = math.sqrt(kx * ky)
    return 2.0 * math.pi * k_eff * grid.dz / denom
