"""Run configuration: profiles, YAML files and environment overrides.

Precedence, lowest first: profile defaults, the config file, environment
variables ``CCSRL__SECTION__KEY=value``, then command-line flags.
"""
from __future__ import annotations

import copy
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .e2co import E2coConfig, LossWeights, TrainConfig
from .econ import EconParams
from .errors import ConfigurationError
from .sacrl import SacConfig

ENV_PREFIX = "CCSRL__"
PROFILES = ("full", "fast")


@dataclass
class DataSection:
    n_traj: int = 600
    n_steps: int = 20
    control_period: float = 100.0
    split: list = field(default_factory=lambda: [3, 1])


@dataclass
class E2coSection:
    d_z: int = 50
    hidden: list = field(default_factory=lambda: [512, 256])
    trunk: int = 200
    epochs: int = 200
    batch_size: int = 4
    lr: float = 1e-3
    lr_decay: float = 0.5
    decay_every: int = 50
    weights: dict = field(default_factory=lambda: {"rec": 1.0, "kl": 0.01, "yobs": 1.0})


@dataclass
class SacSection:
    alpha: float = 0.2
    tau: float = 0.005
    batch_size: int = 256
    capacity: int = 100_000
    lr: float = 3e-4
    env_steps: int = 20
    grad_steps: int = 20
    episodes: int = 1000
    reward_scale: float = 1e-3
    hidden: list = field(default_factory=lambda: [256, 256])
    update_after: int = 256


@dataclass
class EvalSection:
    random_schedules: int = 50


# Defaults that differ between profiles. The fast profile is sized so the
# whole pipeline fits a desktop CPU budget.
PROFILE_DEFAULTS = {
    "full": {},
    "fast": {
        "model": {"grid": {"nx": 32, "ny": 32}},
        "data": {"n_traj": 200},
        "e2co": {"hidden": [64, 64], "trunk": 64},
        "sac": {"episodes": 300},
    },
}


@dataclass
class RunConfig:
    profile: str = "full"
    seed: int = 0
    out: str = "runs/default"
    model: dict = field(default_factory=dict)  # model-file schema (simcore.io)
    data: DataSection = field(default_factory=DataSection)
    e2co: E2coSection = field(default_factory=E2coSection)
    sac: SacSection = field(default_factory=SacSection)
    econ: dict = field(default_factory=dict)  # EconParams fields
    eval: EvalSection = field(default_factory=EvalSection)

    # ----------------------------------------------------------- build
    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d or {})
        _reject_unknown(d, {f.name for f in fields(cls)}, "config")
        profile = d.get("profile", "full")
        if profile not in PROFILES:
            raise ConfigurationError(f"profile must be one of {PROFILES}, got {profile!r}")
        merged = _merge(copy.deepcopy(PROFILE_DEFAULTS[profile]), d)
        sections = {"data": DataSection, "e2co": E2coSection, "sac": SacSection, "eval": EvalSection}
        kw = {}
        for name, sec in sections.items():
            raw = merged.get(name) or {}
            if not isinstance(raw, dict):
                raise ConfigurationError(f"section {name} must be a mapping")
            _reject_unknown(raw, {f.name for f in fields(sec)}, name)
            kw[name] = sec(**raw)
        econ = dict(merged.get("econ") or {})
        _reject_unknown(econ, {f.name for f in fields(EconParams)}, "econ")
        cfg = cls(
            profile=profile,
            seed=int(merged.get("seed", 0)),
            out=str(merged.get("out", "runs/default")),
            model=dict(merged.get("model") or {}),
            econ=econ,
            **kw,
        )
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        """Build every typed object once so bad values fail early."""
        from .simcore import model_from_dict

        model_from_dict(self.model)
        self.econ_params()
        self.train_config()
        self.sac_config()
        if self.data.n_traj < 1 or self.data.n_steps < 1 or self.data.control_period <= 0:
            raise ConfigurationError("data: n_traj, n_steps and control_period must be positive")
        if len(self.data.split) != 2:
            raise ConfigurationError("data.split must be a pair like [3, 1]")
        if self.eval.random_schedules < 0:
            raise ConfigurationError("eval.random_schedules must be nonnegative")

    # ------------------------------------------------------ typed views
    def econ_params(self) -> EconParams:
        return EconParams(**self.econ)

    def e2co_config(self, n_state: int, n_controls: int, n_outputs: int) -> E2coConfig:
        e = self.e2co
        return E2coConfig(n_state, n_controls, n_outputs, e.d_z, tuple(e.hidden), e.trunk)

    def train_config(self) -> TrainConfig:
        e = self.e2co
        w = dict(e.weights)
        _reject_unknown(w, {"rec", "kl", "yobs"}, "e2co.weights")
        return TrainConfig(e.epochs, e.batch_size, e.lr, e.lr_decay, e.decay_every, self.seed, LossWeights(**w))

    def sac_config(self) -> SacConfig:
        s = asdict(self.sac)
        s["hidden"] = tuple(s["hidden"])
        return SacConfig(gamma=self.econ_params().gamma, seed=self.seed, **s)


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigurationError(f"unknown keys in {where}: {sorted(unknown)}")


def _merge(base: dict, over: dict) -> dict:
    """Recursive dict update; ``over`` wins."""
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            base[k] = _merge(base[k], v)
        else:
            base[k] = copy.deepcopy(v)
    return base


def env_overrides(environ=None) -> dict:
    """``CCSRL__E2CO__EPOCHS=5`` -> {"e2co": {"epochs": 5}}; values parse as YAML."""
    environ = os.environ if environ is None else environ
    out: dict = {}
    for key, raw in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        path = [p.lower() for p in key[len(ENV_PREFIX) :].split("__") if p]
        if not path:
            continue
        node = out
        for p in path[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"environment override {key} conflicts with another override")
        node[path[-1]] = yaml.safe_load(raw)
    return out


def load_config(path=None, environ=None, **flags) -> RunConfig:
    """File, then environment, then non-None ``flags`` (profile, seed, out)."""
    d: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"config file {path} does not exist")
        d = yaml.safe_load(path.read_text()) or {}
        if not isinstance(d, dict):
            raise ConfigurationError(f"{path}: top level must be a mapping")
    d = _merge(d, env_overrides(environ))
    d.update({k: v for k, v in flags.items() if v is not None})
    return RunConfig.from_dict(d)


def dump_config(cfg: RunConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
    return path
