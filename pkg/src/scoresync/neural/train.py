"""Deterministic single-threaded training loops for the two toy regressors."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError, InvariantError
from ..softdtw import DEFAULT_LAMBDA
from .data import SENTINEL
from .losses import divergence_batch_loss, mse_batch_loss, mse_padded_value_and_grad
from .model import GRID, SGD, ToyModel, build_inflection_model, build_path_model

log = logging.getLogger(__name__)


class TrainingDiverged(InvariantError):
    pass


@dataclass
class TrainConfig:
    seed: int = 0
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 40
    val_fraction: float = 0.2
    clip: float | None = 5.0
    weight_decay: float = 0.0
    channels: tuple = (4, 8, 8)
    hidden: int = 64
    lam: float = DEFAULT_LAMBDA
    loss: str = "divergence"   # path task only: "divergence" or "mse"


@dataclass
class TrainResult:
    model: ToyModel
    initial_loss: float
    epoch_losses: list = field(default_factory=list)
    val_error: float = float("nan")

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1]


def _split(n, cfg):
    order = np.random.default_rng(cfg.seed).permutation(n)
    n_val = max(1, int(round(n * cfg.val_fraction)))
    return order[n_val:], order[:n_val]


def _fit(model, x, y, loss_fn, cfg: TrainConfig, train_idx):
    opt = SGD(model, cfg.lr, cfg.momentum, cfg.clip, cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed + 1)

    def full_loss():
        vals = [loss_fn(model.forward(x[b]), y[b])[0] * len(b)
                for b in np.array_split(train_idx, max(1, len(train_idx) // 64))]
        return sum(vals) / len(train_idx)

    result = TrainResult(model, full_loss())
    for epoch in range(cfg.epochs):
        order = rng.permutation(train_idx)
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            out = model.forward(x[batch])
            loss, grad = loss_fn(out, y[batch]) if np.all(np.isfinite(out)) else (np.nan, None)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch + 1}, batch starting {start}: "
                    f"finite outputs {np.isfinite(out).mean():.0%}, lr={cfg.lr}")
            model.backward(grad)
            opt.step()
            total += loss * len(batch)
        result.epoch_losses.append(total / len(order))
        log.info("epoch %d loss %.6g", epoch + 1, result.epoch_losses[-1])
    return result


def _check(x, y):
    if len(x) == 0:
        raise InputError("empty dataset")
    if len(x) != len(y):
        raise InputError("inputs and targets differ in length")


def inflection_coordinate_error(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean absolute coordinate error (grid frames) over the non-padded target slots."""
    real = target != SENTINEL
    return float(np.mean(np.abs(pred[real] - target[real])))


def train_inflection_regressor(x, y, cfg: TrainConfig | None = None, dilations=(1, 2, 3)) -> TrainResult:
    """Conv(d1) -> conv(d2) -> conv(d3) -> dense -> dense on padded MSE.

    Targets are in grid frames with the sentinel in unused slots; the net
    regresses them divided by the grid size.
    """
    cfg = cfg or TrainConfig()
    _check(x, y)
    model = build_inflection_model(dilations=dilations, channels=cfg.channels, out_len=y.shape[1],
                                   hidden=cfg.hidden, seed=cfg.seed)
    train_idx, val_idx = _split(len(x), cfg)
    scaled = y / GRID
    loss_fn = lambda out, t: mse_padded_value_and_grad(out, t, SENTINEL / GRID)
    result = _fit(model, x, scaled, loss_fn, cfg, train_idx)
    result.val_error = inflection_coordinate_error(model.forward(x[val_idx]) * GRID, y[val_idx])
    return result


def path_index_error(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean(np.abs(pred - target)))


def train_path_regressor(x, y, cfg: TrainConfig | None = None, attention: bool = True) -> TrainResult:
    """Conv/pool encoder, max-unpool, SASA (or conv) block and dense head,
    trained on the soft-DTW divergence (or MSE) between predicted and true
    score-index sequences."""
    cfg = cfg or TrainConfig()
    _check(x, y)
    model = build_path_model(attention=attention, out_len=y.shape[1], seed=cfg.seed)
    train_idx, val_idx = _split(len(x), cfg)
    if cfg.loss == "divergence":
        loss_fn = lambda out, t: divergence_batch_loss(out, t, cfg.lam)
    elif cfg.loss == "mse":
        loss_fn = mse_batch_loss
    else:
        raise InputError(f"unknown loss {cfg.loss!r}")
    result = _fit(model, x, y, loss_fn, cfg, train_idx)
    result.val_error = path_index_error(model.forward(x[val_idx]), y[val_idx])
    return result
