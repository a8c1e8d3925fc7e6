"""Parameter file plus a YAML sidecar describing the architecture and data."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from ..datapipe import NormStats
from ..errors import ArtifactError, FingerprintMismatch
from ..ndauto import load_params, save_params
from .model import E2coConfig, E2coModel


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".yaml")


def save_e2co(path, model: E2coModel, stats: NormStats, dataset_digest: str | None = None, **extra) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_params(path, model.state_dict())
    meta = {
        "config": model.cfg.to_dict(),
        "norm_stats": stats.to_dict(),
        "dataset_digest": dataset_digest,
        **extra,
    }
    sidecar_path(path).write_text(yaml.safe_dump(meta, sort_keys=False))
    return path


def load_e2co(path, expected_dataset: str | None = None, dtype=np.float32) -> tuple[E2coModel, NormStats, dict]:
    path = Path(path)
    side = sidecar_path(path)
    if not side.exists():
        raise ArtifactError(f"{path}: missing sidecar {side.name}")
    meta = yaml.safe_load(side.read_text())
    if expected_dataset is not None and meta.get("dataset_digest") != expected_dataset:
        raise FingerprintMismatch("surrogate training data", expected_dataset, meta.get("dataset_digest"))
    model = E2coModel(E2coConfig(**meta["config"]), dtype=dtype)
    try:
        model.load_state_dict(load_params(path))
    except ValueError as exc:
        raise ArtifactError(f"{path}: {exc}") from exc
    return model, NormStats(**meta["norm_stats"]), meta
