"""Full-order two-phase CO2/brine simulator."""
from .model import (
    ControlBounds,
    ControlVector,
    FluidProps,
    GridSpec,
    ObservationVector,
    ReservoirModel,
    RockProps,
    StateField,
    WellSpec,
    default_wells,
    sg_from_z,
    z_from_sg,
    z_sat_map,
)
from .io import load_model, model_fingerprint, model_from_dict, model_to_dict, read_csv, read_pgm, save_model, write_csv, write_pgm
from .permeability import generate_permeability
from .simulator import DARCY_FT3, Simulator, run_episode
from .wells import equivalent_radius, peaceman_index

__all__ = [
    "ControlBounds",
    "ControlVector",
    "DARCY_FT3",
    "FluidProps",
    "GridSpec",
    "ObservationVector",
    "ReservoirModel",
    "RockProps",
    "Simulator",
    "StateField",
    "WellSpec",
    "default_wells",
    "equivalent_radius",
    "generate_permeability",
    "load_model",
    "model_fingerprint",
    "model_from_dict",
    "model_to_dict",
    "read_csv",
    "read_pgm",
    "save_model",
    "write_csv",
    "write_pgm",
    "peaceman_index",
    "run_episode",
    "sg_from_z",
    "z_from_sg",
    "z_sat_map",
]
