"""Mini-batch SGD with early stopping."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceDetected, EmptyDataset, ShapeMismatch
from .model import ModelParams, NetConfig, backward_batch, forward_batch, init, predict_batch, sgd_step

log = logging.getLogger(__name__)


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    params: ModelParams | None = None

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch - 1]

    def summary(self) -> dict:
        return {"train_loss": list(self.train_loss), "val_loss": list(self.val_loss),
                "best_epoch": self.best_epoch}


def _arrays(dataset):
    x = getattr(dataset, "inputs", None)
    y = getattr(dataset, "targets", None)
    if x is None:
        x, y = dataset
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


def clip_by_global_norm(grads: dict, max_norm: float) -> dict:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if not math.isfinite(norm):
        raise DivergenceDetected(f"gradient norm is {norm}")
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


def train(config: NetConfig, train_set, val_set, params: ModelParams | None = None) -> TrainReport:
    x_train, y_train = _arrays(train_set)
    x_val, y_val = _arrays(val_set)
    if len(y_train) == 0 or len(y_val) == 0:
        raise EmptyDataset(f"need non-empty train and validation sets, got {len(y_train)} and {len(y_val)}")
    expected = (config.input_channels, config.window)
    for name, x in (("train", x_train), ("validation", x_val)):
        if x.shape[1:] != expected:
            raise ShapeMismatch(f"{name} windows have shape {x.shape[1:]}, config expects {expected}")

    params = init(config) if params is None else params.copy()
    shuffle_rng = np.random.default_rng([config.seed, 1])
    dropout_rng = np.random.default_rng([config.seed, 2])
    report = TrainReport()
    best_val = math.inf
    stale = 0
    n = len(y_train)
    lr = config.learning_rate

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        sq_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            yhat, cache = forward_batch(params, x_train[idx], True, dropout_rng)
            resid = y_train[idx] - yhat
            sq_sum += float(np.dot(resid, resid))
            grads = backward_batch(params, cache, yhat, y_train[idx])
            grads = clip_by_global_norm(grads, config.clip_norm)
            params = sgd_step(params, grads, lr)
        train_loss = sq_sum / n
        val_pred = predict_batch(params, x_val)
        val_loss = float(np.mean((y_val - val_pred) ** 2))
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise DivergenceDetected(
                f"loss became non-finite at epoch {epoch} (train={train_loss}, val={val_loss}); "
                f"try a smaller learning_rate than {lr}")
        report.train_loss.append(train_loss)
        report.val_loss.append(val_loss)
        log.debug("epoch %d train %.6g val %.6g", epoch, train_loss, val_loss)

        if val_loss < best_val:
            best_val = val_loss
            report.best_epoch = epoch
            report.params = params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return report
