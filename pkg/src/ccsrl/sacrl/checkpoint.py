"""Agent parameters plus a YAML sidecar with the configuration."""
from __future__ import annotations

from dataclasses import asdict
from pathlib import Path

import yaml

from ..errors import ArtifactError, FingerprintMismatch
from ..ndauto import load_params, save_params
from .agent import SacAgent, SacConfig


def save_agent(path, agent: SacAgent, surrogate_digest: str | None = None, **extra) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_params(path, agent.state_dict())
    cfg = asdict(agent.cfg)
    cfg["hidden"] = list(agent.cfg.hidden)
    meta = {"d_z": agent.d_z, "n_u": agent.n_u, "config": cfg, "surrogate_digest": surrogate_digest, **extra}
    path.with_name(path.name + ".yaml").write_text(yaml.safe_dump(meta, sort_keys=False))
    return path


def load_agent(path, expected_surrogate: str | None = None) -> tuple[SacAgent, dict]:
    path = Path(path)
    side = path.with_name(path.name + ".yaml")
    if not side.exists():
        raise ArtifactError(f"{path}: missing sidecar {side.name}")
    meta = yaml.safe_load(side.read_text())
    if expected_surrogate is not None and meta.get("surrogate_digest") != expected_surrogate:
        raise FingerprintMismatch("policy surrogate", expected_surrogate, meta.get("surrogate_digest"))
    agent = SacAgent(meta["d_z"], meta["n_u"], SacConfig(**meta["config"]))
    try:
        agent.load_state_dict(load_params(path))
    except ValueError as exc:
        raise ArtifactError(f"{path}: {exc}") from exc
    return agent, meta
