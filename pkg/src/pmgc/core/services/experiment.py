import logging
from collections.abc import Iterable, Sequence

import numpy as np
from pydantic import BaseModel, ValidationError

from pmgc.core.errors import CheckpointError, ConfigError, DataError, ShapeError
from pmgc.core.models import Checkpoint, TrainConfig
from pmgc.core.services.checkpoint import build_checkpoint, checkpoint_params, checkpoint_validation_stats
from pmgc.core.services.data import NormalizationStats, RawSeries, downsample_median, normalize_channels, window_array
from pmgc.core.services.metrics import EvaluationReport, evaluate
from pmgc.core.services.scoring import (
    MIN_STATS_TICKS,
    ScoreSeries,
    apply_threshold,
    forecast_errors,
    normalize_and_aggregate,
    robust_stats,
    window_errors,
)
from pmgc.core.services.trainer import Trainer, split_train_val
from pmgc.core.types import Labels, Mode, StatsSource, SweepParam

logger = logging.getLogger(__name__)


class ExperimentResult(BaseModel):
    """Evaluation of one configuration over several seeds."""

    config: TrainConfig
    seeds: list[int]
    reports: list[EvaluationReport]

    @property
    def mean_pointwise_f1(self) -> float:
        return float(np.mean([r.best_pointwise.f1 for r in self.reports]))

    @property
    def mean_composite_f1(self) -> float:
        return float(np.mean([r.best_composite.f1 for r in self.reports]))


def fit(train: RawSeries, config: TrainConfig) -> Checkpoint:
    """
    Down-sample, normalize, window and train; keep median/IQR of the best model's validation errors
    in the checkpoint when the validation split has enough windows.
    """
    series = downsample_median(train, config.downsample)
    stats = NormalizationStats.fit(series, config.normalization)
    series = normalize_channels(series, stats)
    windows = window_array(series.values, config.window)
    params, history = Trainer(config).train(windows)

    _, val_idx = split_train_val(range(windows.shape[0]), config.validation_fraction)
    validation_stats = None
    if len(val_idx) >= MIN_STATS_TICKS:
        validation_stats = robust_stats(window_errors(windows[val_idx], params, config))
    else:
        logger.warning("only %d validation windows, validation error statistics not stored", len(val_idx))
    return build_checkpoint(config, series.channels, stats, history, params, validation_stats)


def score(
    checkpoint: Checkpoint,
    test: RawSeries,
    stats_source: StatsSource = StatsSource.TEST,
    threshold: float | None = None,
) -> ScoreSeries:
    """
    Raises:
        ShapeError: If the test series has a different channel count than the checkpoint.
        CheckpointError: If validation statistics are requested but the checkpoint has none.
    """
    config = checkpoint.config
    if test.n_channels != checkpoint.n_channels:
        raise ShapeError(f"checkpoint expects {checkpoint.n_channels} channels, test series has {test.n_channels}")
    series = downsample_median(test, config.downsample)
    series = normalize_channels(series, NormalizationStats.from_record(checkpoint.normalization))
    err = forecast_errors(series, checkpoint_params(checkpoint), config)
    match stats_source:
        case StatsSource.TEST:
            stats = robust_stats(err)
        case StatsSource.VALIDATION:
            validation = checkpoint_validation_stats(checkpoint)
            if validation is None:
                raise CheckpointError("checkpoint has no validation error statistics")
            stats = validation
    scores = normalize_and_aggregate(err, stats)
    return scores if threshold is None else apply_threshold(scores, threshold)


def scored_labels(test: RawSeries, downsample: int, first_tick: int, count: int) -> Labels:
    """Test labels aligned with scored ticks (the first w - 1 ticks have no score)."""
    if test.labels is None:
        raise DataError("test series has no labels")
    labels = downsample_median(test, downsample).labels
    if labels is None or labels.size != first_tick + count:
        raise DataError(f"{count} scores from tick {first_tick} do not align with {0 if labels is None else labels.size} labels")
    return labels[first_tick:]


def run_experiment(
    train: RawSeries,
    test: RawSeries,
    config: TrainConfig,
    seeds: Iterable[int] | None = None,
    stats_source: StatsSource = StatsSource.TEST,
) -> ExperimentResult:
    """Train, score and evaluate once per seed."""
    seed_list = [config.seed] if seeds is None else list(seeds)
    reports = []
    for seed in seed_list:
        seeded = config.model_copy(update={"seed": seed})
        scores = score(fit(train, seeded), test, stats_source)
        labels = scored_labels(test, config.downsample, scores.first_tick, scores.scores.size)
        reports.append(evaluate(scores.scores, labels))
        logger.info(
            "%s seed %d: F1 %.4f, F1-composite %.4f",
            config.mode,
            seed,
            reports[-1].best_pointwise.f1,
            reports[-1].best_composite.f1,
        )
    return ExperimentResult(config=config, seeds=seed_list, reports=reports)


def ablate(
    train: RawSeries, test: RawSeries, config: TrainConfig, modes: Sequence[Mode] = tuple(Mode), seeds: Iterable[int] = (0,)
) -> list[ExperimentResult]:
    seeds = list(seeds)
    return [run_experiment(train, test, config.model_copy(update={"mode": mode}), seeds) for mode in modes]


def sweep(
    train: RawSeries,
    test: RawSeries,
    config: TrainConfig,
    param: SweepParam,
    values: Sequence[float],
    seeds: Iterable[int] = (0,),
) -> list[ExperimentResult]:
    """One experiment per value of the swept hyperparameter; every variant is validated like a fresh config."""
    seeds = list(seeds)
    results = []
    for value in values:
        try:
            variant = TrainConfig.model_validate({**config.model_dump(), param.field: value})
        except ValidationError as e:
            raise ConfigError(f"{param}={value}: {e}") from e
        results.append(run_experiment(train, test, variant, seeds))
    return results
