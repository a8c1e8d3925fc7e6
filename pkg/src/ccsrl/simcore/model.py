"""Data model of the full-order reservoir: grid, rock, fluids, wells, state."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ConfigurationError, ContractError


@dataclass(frozen=True)
class GridSpec:
    nx: int = 64
    ny: int = 64
    dx: float = 65.6  # ft
    dy: float = 65.6
    dz: float = 65.6
    depth: float = 7500.0  # ft
    temperature: float = 200.0  # F

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ConfigurationError(f"grid needs nx, ny >= 2, got {self.nx}x{self.ny}")
        if min(self.dx, self.dy, self.dz) <= 0 or self.depth <= 0:
            raise ConfigurationError("grid dimensions must be positive")

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape of a cell field: rows are y, columns are x."""
        return (self.ny, self.nx)

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy * self.dz

    def flat_index(self, i: int, j: int) -> int:
        return j * self.nx + i


@dataclass(frozen=True)
class RockProps:
    perm: np.ndarray  # mD, shape grid.shape
    porosity_ref: float = 0.13
    rock_compressibility: float = 4.0e-6  # 1/psi

    def __post_init__(self):
        if not 0.0 < self.porosity_ref < 1.0:
            raise ConfigurationError("porosity must lie in (0, 1)")
        if self.rock_compressibility < 0:
            raise ConfigurationError("rock compressibility must be nonnegative")
        perm = np.asarray(self.perm, dtype=float)
        if perm.ndim != 2 or not np.all(np.isfinite(perm)) or np.any(perm <= 0):
            raise ConfigurationError("permeability must be a positive finite 2-D field")
        object.__setattr__(self, "perm", perm)


@dataclass(frozen=True)
class FluidProps:
    mu_w: float = 0.5  # cp
    mu_g: float = 0.06
    c_w: float = 3.0e-6  # 1/psi
    c_g: float = 1.0e-4
    rho_w_ref: float = 62.4  # lb/ft3, informational (no gravity)
    rho_g_ref: float = 35.2
    b_w: float = 3.46  # lbmol/ft3 at p_ref
    b_g: float = 0.80
    B_g: float = 0.005  # reservoir ft3 per scf
    p_ref: float = 3045.0  # psia
    S_wc: float = 0.2
    S_gr: float = 0.05
    n_w: float = 2.0
    n_g: float = 2.0
    krw_max: float = 1.0
    krg_max: float = 0.9

    def __post_init__(self):
        positive = ("mu_w", "mu_g", "rho_w_ref", "rho_g_ref", "b_w", "b_g", "B_g", "p_ref")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"fluid property {name} must be positive")
        if self.c_w < 0 or self.c_g < 0:
            raise ConfigurationError("fluid compressibilities must be nonnegative")
        if not (0.0 <= self.S_wc and 0.0 <= self.S_gr and self.S_wc + self.S_gr < 1.0):
            raise ConfigurationError("need 0 <= S_wc + S_gr < 1")
        if self.n_w < 1 or self.n_g < 1:
            raise ConfigurationError("Corey exponents must be >= 1")
        if not (0 < self.krw_max <= 1 and 0 < self.krg_max <= 1):
            raise ConfigurationError("relative permeability endpoints must lie in (0, 1]")

    def relperm(self, sg):
        """Corey curves; returns (krw, krg)."""
        sg = np.asarray(sg, dtype=float)
        span = 1.0 - self.S_wc - self.S_gr
        swe = np.clip((1.0 - sg - self.S_wc) / span, 0.0, 1.0)
        sge = np.clip((sg - self.S_gr) / span, 0.0, 1.0)
        return self.krw_max * swe**self.n_w, self.krg_max * sge**self.n_g

    def mobilities(self, sg):
        krw, krg = self.relperm(sg)
        return krw / self.mu_w, krg / self.mu_g

    def molar_density_w(self, p):
        return self.b_w * (1.0 + self.c_w * (np.asarray(p) - self.p_ref))

    def molar_density_g(self, p):
        return self.b_g * (1.0 + self.c_g * (np.asarray(p) - self.p_ref))


WELL_KINDS = ("injector", "producer")


@dataclass(frozen=True)
class WellSpec:
    id: str
    kind: str
    cell: tuple[int, int]  # (i, j)
    radius: float = 0.30
    skin: float = 0.0

    def __post_init__(self):
        if self.kind not in WELL_KINDS:
            raise ConfigurationError(f"well {self.id}: kind must be one of {WELL_KINDS}")
        if self.radius <= 0:
            raise ConfigurationError(f"well {self.id}: radius must be positive")
        object.__setattr__(self, "cell", (int(self.cell[0]), int(self.cell[1])))


def default_wells(grid: GridSpec) -> list[WellSpec]:
    """Producers at the corners inset by n/8 cells plus the center; injectors
    at the centers of the four quadrants."""
    ix, iy = max(1, grid.nx // 8), max(1, grid.ny // 8)
    qx, qy = (grid.nx // 2 - 1) // 2, (grid.ny // 2 - 1) // 2
    prod = [
        (ix, iy),
        (grid.nx - 1 - ix, iy),
        (ix, grid.ny - 1 - iy),
        (grid.nx - 1 - ix, grid.ny - 1 - iy),
        (grid.nx // 2, grid.ny // 2),
    ]
    inj = [
        (qx, qy),
        (grid.nx - 1 - qx, qy),
        (qx, grid.ny - 1 - qy),
        (grid.nx - 1 - qx, grid.ny - 1 - qy),
    ]
    wells = [WellSpec(f"P{k + 1}", "producer", c) for k, c in enumerate(prod)]
    wells += [WellSpec(f"I{k + 1}", "injector", c) for k, c in enumerate(inj)]
    return wells


@dataclass(frozen=True)
class ControlBounds:
    bhp_low: float = 2200.0
    bhp_high: float = 2500.0
    rate_low: float = 1.0e5  # scf/day
    rate_high: float = 1.0e6

    def __post_init__(self):
        if not (0 < self.bhp_low < self.bhp_high):
            raise ConfigurationError("need 0 < bhp_low < bhp_high")
        if not (0 <= self.rate_low < self.rate_high):
            raise ConfigurationError("need 0 <= rate_low < rate_high")

    def arrays(self, n_prod: int, n_inj: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-channel lower and upper bounds in control-vector order."""
        low = np.r_[np.full(n_prod, self.bhp_low), np.full(n_inj, self.rate_low)]
        high = np.r_[np.full(n_prod, self.bhp_high), np.full(n_inj, self.rate_high)]
        return low, high

    def midpoint(self, n_prod: int, n_inj: int) -> "ControlVector":
        low, high = self.arrays(n_prod, n_inj)
        return ControlVector.from_array(0.5 * (low + high), n_prod)

    def validate(self, u: "ControlVector", tol: float = 1e-9) -> None:
        low, high = self.arrays(len(u.producer_bhp), len(u.injector_rate))
        a = u.to_array()
        bad = (a < low - tol * np.abs(low)) | (a > high + tol * np.abs(high))
        if np.any(bad):
            raise ContractError(f"control channels {np.flatnonzero(bad).tolist()} outside bounds")


@dataclass
class ControlVector:
    producer_bhp: np.ndarray  # psia
    injector_rate: np.ndarray  # scf/day

    def __post_init__(self):
        self.producer_bhp = np.asarray(self.producer_bhp, dtype=float).reshape(-1)
        self.injector_rate = np.asarray(self.injector_rate, dtype=float).reshape(-1)

    def to_array(self) -> np.ndarray:
        return np.r_[self.producer_bhp, self.injector_rate]

    @classmethod
    def from_array(cls, a, n_prod: int) -> "ControlVector":
        a = np.asarray(a, dtype=float).reshape(-1)
        return cls(a[:n_prod].copy(), a[n_prod:].copy())


@dataclass
class ObservationVector:
    q_w: np.ndarray  # STB/day per producer
    q_g: np.ndarray  # scf/day per producer
    p_wf: np.ndarray  # psia per injector

    def __post_init__(self):
        self.q_w = np.asarray(self.q_w, dtype=float).reshape(-1)
        self.q_g = np.asarray(self.q_g, dtype=float).reshape(-1)
        self.p_wf = np.asarray(self.p_wf, dtype=float).reshape(-1)

    def to_array(self) -> np.ndarray:
        return np.r_[self.q_w, self.q_g, self.p_wf]

    @classmethod
    def from_array(cls, a, n_prod: int) -> "ObservationVector":
        a = np.asarray(a, dtype=float).reshape(-1)
        return cls(a[:n_prod].copy(), a[n_prod : 2 * n_prod].copy(), a[2 * n_prod :].copy())


def sg_from_z(z, fluids: FluidProps):
    """Overall CO2 mole fraction -> gas saturation (immiscible phases)."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0) or np.any(z > 1):
        raise ContractError("mole fraction must lie in [0, 1]")
    return z * fluids.b_w / (fluids.b_g * (1.0 - z) + fluids.b_w * z)


def z_from_sg(sg, fluids: FluidProps):
    sg = np.asarray(sg, dtype=float)
    if np.any(sg < 0) or np.any(sg > 1):
        raise ContractError("saturation must lie in [0, 1]")
    return sg * fluids.b_g / (fluids.b_w * (1.0 - sg) + fluids.b_g * sg)


def z_sat_map(value, fluids: FluidProps, inverse: bool = False):
    """Map z -> S_g, or S_g -> z when ``inverse`` is set."""
    return z_from_sg(value, fluids) if inverse else sg_from_z(value, fluids)


@dataclass
class StateField:
    pressure: np.ndarray  # psia, grid.shape
    z_co2: np.ndarray  # grid.shape

    def __post_init__(self):
        self.pressure = np.asarray(self.pressure, dtype=float)
        self.z_co2 = np.asarray(self.z_co2, dtype=float)
        if self.pressure.shape != self.z_co2.shape:
            raise ContractError(f"pressure {self.pressure.shape} and z {self.z_co2.shape} differ")
        if np.any(self.pressure <= 0):
            raise ContractError("pressure must be positive")
        if np.any(self.z_co2 < 0) or np.any(self.z_co2 > 1):
            raise ContractError("z_co2 must lie in [0, 1]")

    def copy(self) -> "StateField":
        return StateField(self.pressure.copy(), self.z_co2.copy())

    def flatten(self) -> np.ndarray:
        """[pressure; z] stacked, length 2 * n_cells."""
        return np.r_[self.pressure.ravel(), self.z_co2.ravel()]

    @classmethod
    def from_flat(cls, x, shape: tuple[int, int]) -> "StateField":
        x = np.asarray(x, dtype=float)
        n = shape[0] * shape[1]
        return cls(x[:n].reshape(shape).copy(), x[n:].reshape(shape).copy())


@dataclass(frozen=True)
class ReservoirModel:
    grid: GridSpec
    rock: RockProps
    fluids: FluidProps = field(default_factory=FluidProps)
    wells: Sequence[WellSpec] = ()
    bounds: ControlBounds = field(default_factory=ControlBounds)
    initial_pressure: float = 3045.0
    initial_z: float = 0.0

    def __post_init__(self):
        if self.rock.perm.shape != self.grid.shape:
            raise ConfigurationError(
                f"permeability shape {self.rock.perm.shape} does not match grid {self.grid.shape}"
            )
        seen = {}
        for w in self.wells:
            i, j = w.cell
            if not (0 <= i < self.grid.nx and 0 <= j < self.grid.ny):
                raise ConfigurationError(f"well {w.id} cell {w.cell} outside grid")
            if w.cell in seen:
                raise ConfigurationError(f"wells {seen[w.cell]} and {w.id} share cell {w.cell}")
            seen[w.cell] = w.id
        if self.initial_pressure <= 0 or not 0 <= self.initial_z <= 1:
            raise ConfigurationError("invalid initial condition")
        f, c_r = self.fluids, self.rock.rock_compressibility
        if c_r + f.c_w <= 0 or c_r + f.c_g <= 0:
            raise ConfigurationError("total compressibility must be positive")

    @property
    def producers(self) -> list[WellSpec]:
        return [w for w in self.wells if w.kind == "producer"]

    @property
    def injectors(self) -> list[WellSpec]:
        return [w for w in self.wells if w.kind == "injector"]

    @property
    def n_controls(self) -> int:
        return len(self.producers) + len(self.injectors)

    @property
    def n_outputs(self) -> int:
        return 2 * len(self.producers) + len(self.injectors)

    def initial_state(self) -> StateField:
        shape = self.grid.shape
        return StateField(np.full(shape, float(self.initial_pressure)), np.full(shape, float(self.initial_z)))
