"""Trajectory generation, splitting and the binary dataset container."""
from __future__ import annotations

import hashlib
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import yaml

from ..errors import ConfigurationError, ContractError, FingerprintMismatch, ArtifactError
from ..seeding import stream
from ..simcore import ControlBounds, ControlVector, ReservoirModel, Simulator, model_fingerprint
from .norm import NormStats, Normalizer, fit_stats

MAGIC = b"E2CD"
VERSION = 1


def sample_schedule(seed, bounds: ControlBounds, n_prod: int, n_inj: int, n_steps: int = 20) -> list[ControlVector]:
    """Each channel independently uniform in its bounds, redrawn every period.

    ``seed`` may be an int or a Generator.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lo, hi = bounds.arrays(n_prod, n_inj)
    draws = rng.uniform(lo, hi, size=(n_steps, lo.size))
    return [ControlVector.from_array(row, n_prod) for row in draws]


@dataclass
class Dataset:
    """Normalized transition tuples in trajectory-major, step-major order."""

    x: np.ndarray  # (M, 2 N_b) float32, x_t
    u: np.ndarray  # (M, N_u)
    x_next: np.ndarray  # (M, 2 N_b)
    y: np.ndarray  # (M, N_y), y_{t+1}
    stats: NormStats
    n_traj: int
    n_steps: int
    grid_shape: tuple[int, int]
    n_prod: int
    n_inj: int
    traj_ids: np.ndarray = field(default=None)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m = self.x.shape[0]
        if not (self.u.shape[0] == self.x_next.shape[0] == self.y.shape[0] == m == self.n_traj * self.n_steps):
            raise ContractError("tuple arrays disagree on the number of tuples")
        if self.traj_ids is None:
            self.traj_ids = np.arange(self.n_traj)

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def n_cells(self) -> int:
        return self.grid_shape[0] * self.grid_shape[1]

    @property
    def step_index(self) -> np.ndarray:
        return np.tile(np.arange(self.n_steps), self.n_traj)

    @property
    def tuple_traj_id(self) -> np.ndarray:
        return np.repeat(self.traj_ids, self.n_steps)

    def normalizer(self) -> Normalizer:
        return Normalizer(self.stats, self.n_cells, self.n_prod, self.n_inj)

    def trajectory(self, k: int) -> dict[str, np.ndarray]:
        """Views of trajectory ``k`` (position within this dataset)."""
        s = slice(k * self.n_steps, (k + 1) * self.n_steps)
        return {"x0": self.x[s.start], "u": self.u[s], "x": self.x_next[s], "y": self.y[s]}

    def subset(self, positions: Sequence[int]) -> "Dataset":
        positions = np.asarray(positions, dtype=int)
        rows = (positions[:, None] * self.n_steps + np.arange(self.n_steps)).ravel()
        return Dataset(
            self.x[rows], self.u[rows], self.x_next[rows], self.y[rows], self.stats, len(positions),
            self.n_steps, self.grid_shape, self.n_prod, self.n_inj, self.traj_ids[positions].copy(), dict(self.meta),
        )

    def out_of_range_fraction(self) -> float:
        """Share of entries outside [-0.01, 1.01] (flagged, not rejected)."""
        bad = total = 0
        for a in (self.x, self.u, self.x_next, self.y):
            bad += int(np.count_nonzero((a < -0.01) | (a > 1.01)))
            total += a.size
        return bad / total


# ----------------------------------------------------------- generation
def _run_trajectory(args):
    model, seed, k, n_steps, period, sim_kwargs = args
    sim = Simulator(model, **sim_kwargs)
    sched = sample_schedule(stream(seed, "trajectory", k), model.bounds, len(model.producers), len(model.injectors), n_steps)
    try:
        traj = sim.run_episode(sched, period)
    except Exception as exc:  # report which trajectory failed
        raise type(exc)(f"trajectory {k}: {exc}") from exc
    states = np.stack([model.initial_state().flatten()] + [s.flatten() for s, _ in traj])
    controls = np.stack([u.to_array() for u in sched])
    obs = np.stack([o.to_array() for _, o in traj])
    return states, controls, obs


def simulate_trajectories(
    model: ReservoirModel,
    n_traj: int,
    n_steps: int = 20,
    seed: int = 0,
    control_period: float = 100.0,
    workers: int = 1,
    sim_kwargs: dict | None = None,
    progress: Callable[[int], None] | None = None,
):
    """Physical (states, controls, observations) arrays; trajectory k uses the
    stream ``(seed, "trajectory", k)`` so results do not depend on order or
    worker count."""
    jobs = [(model, seed, k, n_steps, control_period, sim_kwargs or {}) for k in range(n_traj)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_trajectory, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_run_trajectory(job))
            if progress:
                progress(len(results))
    states = np.stack([r[0] for r in results])
    controls = np.stack([r[1] for r in results])
    obs = np.stack([r[2] for r in results])
    return states, controls, obs


def build_dataset(model: ReservoirModel, states, controls, obs, meta: dict | None = None) -> Dataset:
    n_traj, n_t1, n_state = states.shape
    n_steps = n_t1 - 1
    n_cells = n_state // 2
    n_prod, n_inj = len(model.producers), len(model.injectors)
    b = model.bounds
    stats = fit_stats(
        states[:, :, :n_cells],
        (b.bhp_low, b.bhp_high),
        obs[:, :, 2 * n_prod :],
        obs[:, :, :n_prod],
        (b.rate_low, b.rate_high),
        obs[:, :, n_prod : 2 * n_prod],
    )
    nz = Normalizer(stats, n_cells, n_prod, n_inj)
    xs = nz.norm(states, "x").astype(np.float32)
    return Dataset(
        x=xs[:, :-1].reshape(-1, n_state),
        u=nz.norm(controls, "u").astype(np.float32).reshape(n_traj * n_steps, -1),
        x_next=xs[:, 1:].reshape(-1, n_state),
        y=nz.norm(obs, "y").astype(np.float32).reshape(n_traj * n_steps, -1),
        stats=stats,
        n_traj=n_traj,
        n_steps=n_steps,
        grid_shape=model.grid.shape,
        n_prod=n_prod,
        n_inj=n_inj,
        meta=dict(meta or {}),
    )


def generate_dataset(
    model: ReservoirModel,
    n_traj: int = 600,
    n_steps: int = 20,
    seed: int = 0,
    control_period: float = 100.0,
    workers: int = 1,
    sim_kwargs: dict | None = None,
    progress: Callable[[int], None] | None = None,
) -> Dataset:
    states, controls, obs = simulate_trajectories(
        model, n_traj, n_steps, seed, control_period, workers, sim_kwargs, progress
    )
    meta = {"seed": int(seed), "model_fingerprint": model_fingerprint(model), "control_period": float(control_period)}
    return build_dataset(model, states, controls, obs, meta)


# ---------------------------------------------------------------- split
def split(ds: Dataset, ratio: tuple[int, int] = (3, 1), seed: int = 0) -> tuple[Dataset, Dataset]:
    """Split by whole trajectories after a seeded shuffle of trajectory ids."""
    a, b = ratio
    if a < 0 or b < 0 or a + b == 0:
        raise ConfigurationError(f"invalid split ratio {ratio}")
    n_train = int(round(ds.n_traj * a / (a + b)))
    if (a > 0 and n_train == 0) or (b > 0 and n_train == ds.n_traj):
        raise ConfigurationError(f"{ds.n_traj} trajectories cannot be split {a}:{b}")
    order = stream(seed, "split").permutation(ds.n_traj)
    return ds.subset(np.sort(order[:n_train])), ds.subset(np.sort(order[n_train:]))


# ------------------------------------------------------------ container
def _header(ds: Dataset) -> bytes:
    n_b = ds.n_cells
    return (
        MAGIC
        + struct.pack("<H", VERSION)
        + struct.pack("<5Q", ds.n_traj, ds.n_steps, n_b, ds.u.shape[1], ds.y.shape[1])
        + ds.stats.as_array().astype("<f8").tobytes()
    )


def write_dataset(path, ds: Dataset) -> dict:
    """Write the container and a ``.yaml`` manifest next to it; returns the manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    h = hashlib.sha256()
    with open(path, "wb") as fh:
        head = _header(ds)
        fh.write(head)
        h.update(head)
        block = np.concatenate([ds.x, ds.u, ds.x_next, ds.y], axis=1).astype("<f4")
        raw = block.tobytes()
        fh.write(raw)
        h.update(raw)
    manifest = {
        "file": path.name,
        "sha256": h.hexdigest(),
        "seed": ds.meta.get("seed"),
        "model_fingerprint": ds.meta.get("model_fingerprint"),
        "control_period": ds.meta.get("control_period"),
        "grid_shape": list(ds.grid_shape),
        "n_prod": ds.n_prod,
        "n_inj": ds.n_inj,
        "n_traj": ds.n_traj,
        "n_steps": ds.n_steps,
        "n_tuples": len(ds),
        "traj_ids": [int(t) for t in ds.traj_ids],
        "norm_stats": ds.stats.to_dict(),
    }
    with open(manifest_path(path), "w") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=False)
    return manifest


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".yaml")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def read_dataset(path, expected_fingerprint: str | None = None) -> Dataset:
    path = Path(path)
    man_file = manifest_path(path)
    manifest = yaml.safe_load(man_file.read_text()) if man_file.exists() else {}
    if manifest:
        digest = file_digest(path)
        if digest != manifest["sha256"]:
            raise ArtifactError(f"{path}: digest {digest} does not match manifest {manifest['sha256']}")
        if expected_fingerprint is not None and manifest.get("model_fingerprint") != expected_fingerprint:
            raise FingerprintMismatch("dataset model", expected_fingerprint, manifest.get("model_fingerprint"))
    buf = path.read_bytes()
    if buf[:4] != MAGIC:
        raise ArtifactError(f"{path}: not an E2CD container")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version != VERSION:
        raise ArtifactError(f"{path}: unsupported container version {version}")
    n_traj, n_steps, n_b, n_u, n_y = struct.unpack_from("<5Q", buf, 6)
    off = 6 + 40
    stats = NormStats.from_array(np.frombuffer(buf, "<f8", 8, off))
    off += 64
    width = 4 * n_b + n_u + n_y
    m = n_traj * n_steps
    if len(buf) - off != 4 * m * width:
        raise ArtifactError(f"{path}: payload size does not match header")
    block = np.frombuffer(buf, "<f4", m * width, off).reshape(m, width).astype(np.float32)
    c = np.cumsum([2 * n_b, n_u, 2 * n_b])
    grid_shape = tuple(manifest.get("grid_shape", (1, n_b)))
    n_prod = manifest.get("n_prod", (n_y - n_u))
    n_inj = manifest.get("n_inj", n_u - n_prod)
    return Dataset(
        x=np.ascontiguousarray(block[:, : c[0]]),
        u=np.ascontiguousarray(block[:, c[0] : c[1]]),
        x_next=np.ascontiguousarray(block[:, c[1] : c[2]]),
        y=np.ascontiguousarray(block[:, c[2] :]),
        stats=stats,
        n_traj=int(n_traj),
        n_steps=int(n_steps),
        grid_shape=grid_shape,
        n_prod=int(n_prod),
        n_inj=int(n_inj),
        traj_ids=np.asarray(manifest.get("traj_ids", np.arange(n_traj)), dtype=int),
        meta={k: manifest.get(k) for k in ("seed", "model_fingerprint", "control_period", "sha256")},
    )
