"""Per-period reward, net present value and rate-unit conversions.

Prices are per metric ton of CO2 and per stock-tank barrel of brine, while
the simulator reports gas in standard cubic feet per day, so gas rates are
converted to ton/day with a single constant derived from the ideal gas law.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError

# Standard conditions: 60 F and 14.696 psia.
R_FIELD = 10.731577  # psia ft3 / (lbmol R)
T_STANDARD_R = 519.67
P_STANDARD_PSIA = 14.696
LB_PER_METRIC_TON = 2204.62262
CO2_MOLAR_MASS = 44.01  # lb / lbmol
STB_FT3 = 5.614583


def standard_molar_volume() -> float:
    """Ideal-gas volume of one lbmol at standard conditions, scf/lbmol."""
    return R_FIELD * T_STANDARD_R / P_STANDARD_PSIA


def default_scf_per_ton() -> float:
    return LB_PER_METRIC_TON / CO2_MOLAR_MASS * standard_molar_volume()


@dataclass(frozen=True)
class EconParams:
    r_credit: float = 50.0  # $/ton stored
    r_opr: float = 10.0  # $/ton injected
    r_w: float = 5.0  # $/STB brine handled
    r_co2: float = 50.0  # $/ton CO2 produced
    gamma: float = 0.986  # depreciation per period
    dt_days: float = 100.0
    scf_per_ton: float = default_scf_per_ton()

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ContractError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.dt_days <= 0:
            raise ContractError(f"dt_days must be positive, got {self.dt_days}")
        for name in ("r_credit", "r_opr", "r_w", "r_co2"):
            if getattr(self, name) < 0:
                raise ContractError(f"price {name} must be nonnegative")
        if self.scf_per_ton <= 0:
            raise ContractError("scf_per_ton must be positive")

    def scaled(self, factor: float) -> "EconParams":
        """Copy with every price multiplied by ``factor``."""
        return EconParams(
            r_credit=self.r_credit * factor,
            r_opr=self.r_opr * factor,
            r_w=self.r_w * factor,
            r_co2=self.r_co2 * factor,
            gamma=self.gamma,
            dt_days=self.dt_days,
            scf_per_ton=self.scf_per_ton,
        )


def gas_unit_conversion(rate_scf_day, params: EconParams):
    """scf/day -> metric ton/day."""
    return np.asarray(rate_scf_day, dtype=float) / params.scf_per_ton


def reward_from_tons(q_inj_ton, q_w_stb, q_g_ton, params: EconParams) -> float:
    """Immediate cash rate in $/day with all rates already in priced units."""
    q_inj = np.asarray(q_inj_ton, dtype=float)
    q_w = np.asarray(q_w_stb, dtype=float)
    q_g = np.asarray(q_g_ton, dtype=float)
    if np.any(q_w < 0) or np.any(q_g < 0):
        raise ContractError(
            f"producer rates must be nonnegative (water {q_w.min(initial=0):g}, gas {q_g.min(initial=0):g})"
        )
    if np.any(q_inj < 0):
        raise ContractError("injection rates must be nonnegative")
    return float(
        (params.r_credit - params.r_opr) * q_inj.sum()
        - params.r_w * q_w.sum()
        - params.r_co2 * q_g.sum()
    )


def reward_from_rates(injector_rate_scf, q_w_stb, q_g_scf, params: EconParams) -> float:
    """Immediate cash rate in $/day from surface-unit rates.

    ``injector_rate_scf`` comes from the control vector, ``q_w_stb`` and
    ``q_g_scf`` are per-producer outputs of the observation vector.
    """
    return reward_from_tons(
        gas_unit_conversion(injector_rate_scf, params),
        q_w_stb,
        gas_unit_conversion(q_g_scf, params),
        params,
    )


def reward(u, y, params: EconParams) -> float:
    """Reward for a control vector ``u`` and the observation ``y`` it produced."""
    return reward_from_rates(u.injector_rate, y.q_w, y.q_g, params)


def npv(rewards: Sequence[float], params: EconParams) -> float:
    """Discounted sum over periods, the first period discounted once."""
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 1 or r.size < 1:
        raise ContractError("npv needs a nonempty 1-D sequence of per-period rewards")
    t = np.arange(1, r.size + 1)
    return float(np.sum(params.gamma**t * r) * params.dt_days)


def discount_factors(n_periods: int, params: EconParams) -> np.ndarray:
    return params.gamma ** np.arange(1, n_periods + 1)
