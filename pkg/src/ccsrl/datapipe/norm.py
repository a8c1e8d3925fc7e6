"""Min-max normalization with families of shared scales.

Families: ``pressure`` (cell pressures, producer BHPs, injector p_wf),
``z`` (mole fraction, fixed to [0, 1]), ``water`` (producer water rates) and
``gas`` (injection rates and producer gas rates).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigurationError, ContractError

FAMILIES = ("pressure", "z", "water", "gas")
MARGIN = 0.01


@dataclass(frozen=True)
class NormStats:
    p_min: float
    p_max: float
    qw_min: float
    qw_max: float
    qg_min: float
    qg_max: float
    z_min: float = 0.0
    z_max: float = 1.0

    def __post_init__(self):
        for fam in FAMILIES:
            lo, hi = self.bounds(fam)
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise ConfigurationError(f"normalization bounds for {fam} are not finite")
            if not hi > lo:
                raise ConfigurationError(f"normalization family {fam} has max <= min ({lo}, {hi})")

    def bounds(self, family: str) -> tuple[float, float]:
        key = {"pressure": "p", "z": "z", "water": "qw", "gas": "qg"}.get(family)
        if key is None:
            raise ContractError(f"unknown normalization family {family!r}")
        return getattr(self, f"{key}_min"), getattr(self, f"{key}_max")

    def as_array(self) -> np.ndarray:
        """Block layout used by the dataset container."""
        return np.array(
            [self.p_min, self.p_max, self.z_min, self.z_max, self.qw_min, self.qw_max, self.qg_min, self.qg_max],
            dtype=np.float64,
        )

    @classmethod
    def from_array(cls, a) -> "NormStats":
        p0, p1, z0, z1, w0, w1, g0, g1 = (float(v) for v in a)
        return cls(p0, p1, w0, w1, g0, g1, z0, z1)

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in asdict(self).items()}


def normalize(v, stats: NormStats, family: str):
    lo, hi = stats.bounds(family)
    return (np.asarray(v, dtype=np.float64) - lo) / (hi - lo)


def denormalize(v, stats: NormStats, family: str):
    lo, hi = stats.bounds(family)
    return np.asarray(v, dtype=np.float64) * (hi - lo) + lo


def _with_margin(lo: float, hi: float) -> tuple[float, float]:
    span = hi - lo
    if span <= 0:
        span = max(abs(hi), 1.0)
    return lo - MARGIN * span, hi + MARGIN * span


def fit_stats(pressures, bhp_bounds, p_wf, q_w, rate_bounds, q_g) -> NormStats:
    """Observed extrema, widened by 1 % of the span. The engineering control
    bounds are folded into their families so every admissible control maps
    into the unit interval."""
    p_lo = min(float(np.min(pressures)), float(np.min(p_wf)), bhp_bounds[0])
    p_hi = max(float(np.max(pressures)), float(np.max(p_wf)), bhp_bounds[1])
    g_lo = min(float(np.min(q_g)), rate_bounds[0])
    g_hi = max(float(np.max(q_g)), rate_bounds[1])
    w_lo, w_hi = float(np.min(q_w)), float(np.max(q_w))
    return NormStats(*_with_margin(p_lo, p_hi), *_with_margin(w_lo, w_hi), *_with_margin(g_lo, g_hi))


class Normalizer:
    """Vector-level maps for states, controls and observations."""

    def __init__(self, stats: NormStats, n_cells: int, n_prod: int, n_inj: int):
        self.stats = stats
        self.n_cells, self.n_prod, self.n_inj = n_cells, n_prod, n_inj
        self.state_family = np.array(["pressure"] * n_cells + ["z"] * n_cells)
        self.control_family = np.array(["pressure"] * n_prod + ["gas"] * n_inj)
        self.obs_family = np.array(["water"] * n_prod + ["gas"] * n_prod + ["pressure"] * n_inj)
        self._lo = {}
        self._span = {}
        for kind, fam in (("x", self.state_family), ("u", self.control_family), ("y", self.obs_family)):
            b = np.array([stats.bounds(f) for f in fam])
            self._lo[kind] = b[:, 0]
            self._span[kind] = b[:, 1] - b[:, 0]

    def _check(self, v, kind):
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != self._lo[kind].size:
            raise ContractError(f"expected trailing length {self._lo[kind].size} for {kind}, got {v.shape}")
        return v

    def norm(self, v, kind: str):
        v = self._check(v, kind)
        return (v - self._lo[kind]) / self._span[kind]

    def denorm(self, v, kind: str):
        v = self._check(v, kind)
        return v * self._span[kind] + self._lo[kind]
