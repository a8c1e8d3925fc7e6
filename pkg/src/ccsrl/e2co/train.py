"""Mini-batch training loop with step decay and best-validation selection."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..datapipe import Dataset
from ..errors import ConfigurationError, TrainingError
from ..ndauto import Adam, no_grad
from ..seeding import stream
from .model import E2coModel, LossWeights, total_loss


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 4
    lr: float = 1e-3
    lr_decay: float = 0.5
    decay_every: int = 50
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    eval_batch: int = 512

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.decay_every < 1:
            raise ConfigurationError("epochs >= 0, batch_size >= 1 and decay_every >= 1 are required")
        if not (self.lr > 0 and 0 < self.lr_decay <= 1):
            raise ConfigurationError("need lr > 0 and 0 < lr_decay <= 1")

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay ** (epoch // self.decay_every)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train: float
    val: float
    val_rec: float
    val_kl: float
    val_yobs: float
    seconds: float


def evaluate_loss(model: E2coModel, ds: Dataset, weights: LossWeights, batch: int = 512) -> dict:
    """Tuple-weighted mean loss and components over a whole dataset."""
    if len(ds) == 0:
        raise ConfigurationError("cannot evaluate on an empty dataset")
    acc = {"total": 0.0, "rec": 0.0, "kl": 0.0, "yobs": 0.0}
    with no_grad():
        for s in range(0, len(ds), batch):
            sl = slice(s, s + batch)
            parts = total_loss(model, ds.x[sl], ds.u[sl], ds.x_next[sl], ds.y[sl], weights).as_dict()
            n = ds.x[sl].shape[0]
            for k in acc:
                acc[k] += parts[k] * n
    return {k: v / len(ds) for k, v in acc.items()}


def train(
    model: E2coModel,
    train_ds: Dataset,
    cfg: TrainConfig = TrainConfig(),
    val_ds: Dataset | None = None,
    callback: Callable[[EpochRecord], None] | None = None,
) -> tuple[E2coModel, list[EpochRecord]]:
    """Train in place and return the model holding its best-validation
    parameters (training loss when no validation set is given)."""
    history: list[EpochRecord] = []
    if cfg.epochs == 0:
        return model, history
    n = len(train_ds)
    if n == 0:
        raise ConfigurationError("empty training set")
    opt = Adam(model.named_parameters(), lr=cfg.lr)
    rng = stream(cfg.seed, "e2co", "shuffle")
    best, best_state = np.inf, model.state_dict()
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        opt.lr = cfg.lr_at(epoch)
        order = rng.permutation(n)
        run = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            try:
                parts = total_loss(model, train_ds.x[idx], train_ds.u[idx], train_ds.x_next[idx], train_ds.y[idx], cfg.weights)
                opt.zero_grad()
                parts.total.backward()
                opt.step()
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch}: {exc}") from exc
            run += float(parts.total.data) * idx.size
        train_loss = run / n
        if not np.isfinite(train_loss):
            raise TrainingError(f"epoch {epoch}: training loss diverged")
        if val_ds is not None and len(val_ds):
            v = evaluate_loss(model, val_ds, cfg.weights, cfg.eval_batch)
        else:
            v = {"total": train_loss, "rec": np.nan, "kl": np.nan, "yobs": np.nan}
        rec = EpochRecord(epoch, opt.lr, train_loss, v["total"], v["rec"], v["kl"], v["yobs"], time.perf_counter() - t0)
        history.append(rec)
        if callback:
            callback(rec)
        if v["total"] < best:
            best, best_state = v["total"], model.state_dict()
    model.load_state_dict(best_state)
    return model, history
