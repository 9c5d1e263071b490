import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import pydash

from pmgc.core import numeric as nx
from pmgc.core.errors import ConfigError, DataError, ShapeError, TrainingDivergedError
from pmgc.core.forecaster import WindowSample, init_params, total_loss
from pmgc.core.models import EpochRecord, TrainConfig, TrainHistory
from pmgc.core.optim import AdamState, adam_step
from pmgc.core.types import Matrix, ParamStore, ValMetric

logger = logging.getLogger(__name__)

SHUFFLE_STREAM = 1  # second component of the shuffle seed, keeps it apart from parameter init


@dataclass(frozen=True, slots=True)
class LossSummary:
    """Mean per-window losses over a set of windows."""

    total: float
    prediction: float
    cohesion: float

    def select(self, metric: ValMetric) -> float:
        return self.total if metric is ValMetric.TOTAL else self.prediction


def split_train_val[T](windows: Sequence[T], fraction: float) -> tuple[list[T], list[T]]:
    """Chronological split: the last ceil(fraction * M) windows validate, at least one window trains."""
    if not 0 < fraction < 1:
        raise ConfigError(f"validation fraction must be in (0, 1), got {fraction}")
    total = len(windows)
    if total < 2:
        raise DataError(f"need at least 2 windows to split, got {total}")
    n_val = min(max(math.ceil(fraction * total - 1e-9), 1), total - 1)
    return list(windows[: total - n_val]), list(windows[total - n_val :])


def stack_windows(windows: Sequence[WindowSample] | Matrix) -> Matrix:
    if isinstance(windows, np.ndarray):
        return windows
    if not windows:
        raise DataError("no windows")
    return np.stack([w.full for w in windows])


class Trainer:
    """Mini-batch Adam training with best-epoch selection on a chronological validation split."""

    def __init__(self, config: TrainConfig) -> None:
        self.config = config

    def train(self, windows: Sequence[WindowSample] | Matrix) -> tuple[ParamStore, TrainHistory]:
        """
        Train on the leading windows, validate on the trailing ones after every epoch and
        return the parameters of the epoch with the lowest validation loss.

        Raises:
            ShapeError: If window width does not match the config.
            TrainingDivergedError: If a batch loss is not finite.
        """
        cfg = self.config
        data = stack_windows(windows)
        if data.shape[-1] != cfg.window:
            raise ShapeError(f"windows have width {data.shape[-1]}, config expects {cfg.window}")
        train_idx, val_idx = split_train_val(range(data.shape[0]), cfg.validation_fraction)
        train_data, val_data = data[train_idx], data[val_idx]

        params = init_params(data.shape[1], cfg, cfg.seed)
        state = AdamState(learning_rate=cfg.learning_rate)
        rng = np.random.default_rng([cfg.seed, SHUFFLE_STREAM])
        history = TrainHistory()
        best_params = params
        logger.info(
            "training %s on %d windows (%d validation), %d channels", cfg.mode, len(train_idx), len(val_idx), data.shape[1]
        )

        for epoch in range(cfg.epochs):
            sums = np.zeros(3)
            for batch_no, batch in enumerate(pydash.chunk(rng.permutation(len(train_idx)).tolist(), cfg.batch_size)):
                tensors = nx.leaves(params)
                parts = total_loss(train_data[batch], tensors, cfg)
                loss = nx.mean(parts.total)
                if not np.isfinite(loss.item()):
                    raise TrainingDivergedError(epoch, batch_no, loss.item())
                loss.backward()
                grads = {name: t.grad if t.grad is not None else np.zeros_like(t.value) for name, t in tensors.items()}
                params, state = adam_step(params, grads, state)
                sums += [parts.total.value.sum(), parts.prediction.value.sum(), parts.cohesion.value.sum()]

            train_means = sums / len(train_idx)
            val = self.evaluate(params, val_data)
            record = EpochRecord(
                epoch=epoch,
                train_loss=float(train_means[0]),
                train_prediction=float(train_means[1]),
                train_cohesion=float(train_means[2]),
                val_loss=val.select(cfg.val_metric),
                val_prediction=val.prediction,
                val_cohesion=val.cohesion,
            )
            history.epochs.append(record)
            if epoch == 0 or record.val_loss < history.best.val_loss:
                history.best_epoch = epoch
                best_params = params
            logger.info(
                "epoch %d: train %.6g (pred %.6g, gc %.6g), val %.6g",
                epoch,
                record.train_loss,
                record.train_prediction,
                record.train_cohesion,
                record.val_loss,
            )

        logger.info("best epoch %d, validation loss %.6g", history.best_epoch, history.best.val_loss)
        return best_params, history

    def evaluate(self, params: ParamStore, windows: Sequence[WindowSample] | Matrix) -> LossSummary:
        """Mean losses without gradients, accumulated over fixed chunks so repeated calls agree bit for bit."""
        data = stack_windows(windows)
        sums = np.zeros(3)
        for start in range(0, data.shape[0], self.config.batch_size):
            parts = total_loss(data[start : start + self.config.batch_size], params, self.config)
            sums += [parts.total.value.sum(), parts.prediction.value.sum(), parts.cohesion.value.sum()]
        means = sums / data.shape[0]
        return LossSummary(total=float(means[0]), prediction=float(means[1]), cohesion=float(means[2]))
