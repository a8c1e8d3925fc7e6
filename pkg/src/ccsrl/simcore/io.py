"""Model files (YAML), field snapshots (16-bit PGM + sidecar, CSV)."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np
import yaml

from ..errors import ConfigurationError
from .model import ControlBounds, FluidProps, GridSpec, ReservoirModel, RockProps, WellSpec, default_wells
from .permeability import generate_permeability

PERM_DEFAULTS = {"seed": 1, "mean_log_md": 4.0, "std_log_md": 1.0, "corr_len_cells": 6.0}


def _take(cls, section: dict | None, where: str):
    section = dict(section or {})
    allowed = {f.name for f in fields(cls)}
    unknown = set(section) - allowed
    if unknown:
        raise ConfigurationError(f"unknown keys in {where}: {sorted(unknown)}")
    return section


def model_from_dict(d: dict, base_dir: Path | None = None) -> ReservoirModel:
    """Build a model from a nested mapping (the model-file schema)."""
    known = {"grid", "rock", "permeability", "fluids", "wells", "bounds", "initial"}
    unknown = set(d) - known
    if unknown:
        raise ConfigurationError(f"unknown model-file sections: {sorted(unknown)}")
    grid = GridSpec(**_take(GridSpec, d.get("grid"), "grid"))

    rock_d = dict(d.get("rock") or {})
    perm_file = rock_d.pop("perm_csv", None)
    rock_d = _take(RockProps, rock_d, "rock")
    rock_d.pop("perm", None)
    if perm_file is not None:
        path = Path(perm_file)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        perm = read_csv(path, grid.shape)
    else:
        gen = dict(PERM_DEFAULTS)
        extra = set(d.get("permeability") or {}) - set(gen)
        if extra:
            raise ConfigurationError(f"unknown keys in permeability: {sorted(extra)}")
        gen.update(d.get("permeability") or {})
        perm = generate_permeability(int(gen["seed"]), gen["mean_log_md"], gen["std_log_md"], gen["corr_len_cells"], grid)
    rock = RockProps(perm=perm, **rock_d)

    fluids = FluidProps(**_take(FluidProps, d.get("fluids"), "fluids"))
    if d.get("wells") is None:
        wells = default_wells(grid)
    else:
        wells = []
        for w in d["wells"]:
            w = _take(WellSpec, w, "well entry")
            wells.append(WellSpec(**{**w, "cell": tuple(w["cell"])}))
    bounds = ControlBounds(**_take(ControlBounds, d.get("bounds"), "bounds"))
    init = dict(d.get("initial") or {})
    extra = set(init) - {"pressure", "z_co2"}
    if extra:
        raise ConfigurationError(f"unknown keys in initial: {sorted(extra)}")
    return ReservoirModel(
        grid=grid,
        rock=rock,
        fluids=fluids,
        wells=tuple(wells),
        bounds=bounds,
        initial_pressure=float(init.get("pressure", 3045.0)),
        initial_z=float(init.get("z_co2", 0.0)),
    )


def model_to_dict(model: ReservoirModel, perm_csv: str | None = None) -> dict:
    """Inverse of :func:`model_from_dict`. The permeability is referenced by
    ``perm_csv`` (written separately by the caller)."""
    rock = {"porosity_ref": model.rock.porosity_ref, "rock_compressibility": model.rock.rock_compressibility}
    if perm_csv is not None:
        rock["perm_csv"] = perm_csv
    return {
        "grid": asdict(model.grid),
        "rock": rock,
        "fluids": asdict(model.fluids),
        "wells": [{**asdict(w), "cell": list(w.cell)} for w in model.wells],
        "bounds": asdict(model.bounds),
        "initial": {"pressure": model.initial_pressure, "z_co2": model.initial_z},
    }


def model_fingerprint(model: ReservoirModel) -> str:
    """SHA-256 over every physical input, permeability included."""
    h = hashlib.sha256()
    h.update(json.dumps(model_to_dict(model), sort_keys=True).encode())
    h.update(np.ascontiguousarray(model.rock.perm, dtype="<f8").tobytes())
    return h.hexdigest()


def load_model(path) -> ReservoirModel:
    path = Path(path)
    with open(path) as fh:
        d = yaml.safe_load(fh) or {}
    return model_from_dict(d, base_dir=path.parent)


def save_model(model: ReservoirModel, path) -> Path:
    """Write ``path`` (YAML) plus ``<stem>_perm.csv`` next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    perm_name = path.stem + "_perm.csv"
    write_csv(path.parent / perm_name, model.rock.perm)
    with open(path, "w") as fh:
        yaml.safe_dump(model_to_dict(model, perm_csv=perm_name), fh, sort_keys=False)
    return path


# ------------------------------------------------------------------ fields
def write_csv(path, field: np.ndarray) -> None:
    """Row-major, one value per line."""
    np.savetxt(path, np.asarray(field, dtype=float).ravel(), fmt="%.17g")


def read_csv(path, shape: tuple[int, int]) -> np.ndarray:
    v = np.loadtxt(path, dtype=float, ndmin=1)
    if v.size != shape[0] * shape[1]:
        raise ConfigurationError(f"{path}: {v.size} values, expected {shape[0] * shape[1]}")
    return v.reshape(shape)


def write_pgm(path, field: np.ndarray, lo: float | None = None, hi: float | None = None) -> tuple[float, float]:
    """16-bit binary PGM, min/max scaled; the scale goes to ``<path>.scale``.

    Values outside [lo, hi] are clipped.
    """
    a = np.asarray(field, dtype=float)
    lo = float(a.min()) if lo is None else float(lo)
    hi = float(a.max()) if hi is None else float(hi)
    span = hi - lo if hi > lo else 1.0
    q = np.rint(np.clip((a - lo) / span, 0.0, 1.0) * 65535).astype(">u2")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{a.shape[1]} {a.shape[0]}\n65535\n".encode("ascii"))
        fh.write(q.tobytes())
    Path(str(path) + ".scale").write_text(f"min: {lo!r}\nmax: {hi!r}\n")
    return lo, hi


def read_pgm(path) -> np.ndarray:
    """Read a PGM written by :func:`write_pgm` back to physical units."""
    path = Path(path)
    raw = path.read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ConfigurationError(f"{path}: not a binary PGM")
    w, h = map(int, parts[1].split())
    q = np.frombuffer(parts[3], dtype=">u2", count=w * h).reshape(h, w)
    scale = yaml.safe_load(Path(str(path) + ".scale").read_text())
    lo, hi = float(scale["min"]), float(scale["max"])
    return lo + q.astype(float) / 65535.0 * (hi - lo if hi > lo else 1.0)
