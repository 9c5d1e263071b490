"""
Anomaly scoring from forecast errors.

The score at tick t comes from the window ending at t: Err_i^t = |x_i,t - last predicted tick|. Errors are
normalized per channel by median and IQR (quartiles by linear interpolation) and aggregated by the max over
channels.
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import numpy.typing as npt
import pandas as pd

from pmgc.core.errors import DataError, ShapeError
from pmgc.core.forecaster import predict_last
from pmgc.core.models import ModelConfig
from pmgc.core.services.data import RawSeries, window_array
from pmgc.core.types import Labels, Matrix, ParamStore

logger = logging.getLogger(__name__)

EPS_IQR = 1e-6
MIN_STATS_TICKS = 4
FORECAST_CHUNK = 256  # windows per forward pass


@dataclass(frozen=True, slots=True)
class ErrorMatrix:
    """Absolute forecast errors, one column per scored tick. Ticks before `first_tick` have no full window."""

    err: Matrix  # (N, T - w + 1)
    first_tick: int

    @property
    def ticks(self) -> Labels:
        return np.arange(self.first_tick, self.first_tick + self.err.shape[1], dtype=np.int64)


@dataclass(frozen=True, slots=True)
class RobustStats:
    median: Matrix  # (N,)
    iqr: Matrix  # (N,)


@dataclass(frozen=True, slots=True)
class ScoreSeries:
    scores: Matrix  # (M,) max over channels
    channel: Labels  # (M,) index of the channel attaining the max
    per_channel: Matrix  # (N, M)
    first_tick: int
    threshold: float | None = None
    decisions: npt.NDArray[np.bool_] | None = None  # set iff threshold is

    @property
    def ticks(self) -> Labels:
        return np.arange(self.first_tick, self.first_tick + self.scores.size, dtype=np.int64)


def forecast_errors(test: RawSeries | Matrix, params: ParamStore, config: ModelConfig) -> ErrorMatrix:
    """
    Forecast every stride-1 window of the test series and keep the error of its final tick.

    Raises:
        ShapeError: If the series is shorter than one window.
    """
    values = test.values if isinstance(test, RawSeries) else test
    err = window_errors(window_array(values, config.window), params, config)
    logger.debug("scored %d ticks on %d channels", err.shape[1], err.shape[0])
    return ErrorMatrix(err=err, first_tick=config.window - 1)


def window_errors(windows: Matrix, params: ParamStore, config: ModelConfig) -> Matrix:
    """Final-tick errors of arbitrary windows (M, N, w) as (N, M); used for validation statistics."""
    predictions = np.concatenate(
        [predict_last(windows[i : i + FORECAST_CHUNK], params, config) for i in range(0, windows.shape[0], FORECAST_CHUNK)]
    )
    return np.abs(windows[:, :, -1] - predictions).T


def robust_stats(err: ErrorMatrix | Matrix) -> RobustStats:
    """
    Per-channel median and IQR = Q3 - Q1, quartiles by linear interpolation between order statistics.

    Raises:
        DataError: If fewer than 4 ticks are available.
    """
    values = err.err if isinstance(err, ErrorMatrix) else err
    if values.shape[1] < MIN_STATS_TICKS:
        raise DataError(f"need at least {MIN_STATS_TICKS} scored ticks for robust statistics, got {values.shape[1]}")
    q1, median, q3 = np.percentile(values, [25.0, 50.0, 75.0], axis=1, method="linear")
    return RobustStats(median=median, iqr=q3 - q1)


def normalize_and_aggregate(err: ErrorMatrix, stats: RobustStats, eps_iqr: float = EPS_IQR) -> ScoreSeries:
    """a_i^t = (Err_i^t - median_i) / max(IQR_i, eps); a^t = max_i a_i^t."""
    if stats.median.shape != (err.err.shape[0],) or stats.iqr.shape != stats.median.shape:
        raise ShapeError(f"stats for {stats.median.shape} channels do not match errors of shape {err.err.shape}")
    per_channel = (err.err - stats.median[:, None]) / np.maximum(stats.iqr, eps_iqr)[:, None]
    return ScoreSeries(
        scores=per_channel.max(axis=0),
        channel=per_channel.argmax(axis=0),
        per_channel=per_channel,
        first_tick=err.first_tick,
    )


def apply_threshold(scores: ScoreSeries, threshold: float) -> ScoreSeries:
    """Flag ticks whose score is strictly above the threshold."""
    return replace(scores, threshold=threshold, decisions=scores.scores > threshold)


def write_scores(scores: ScoreSeries, channels: list[str], path: Path) -> None:
    """One row per scored tick: `tick,score,channel` plus `decision` (0/1) when thresholded."""
    frame = pd.DataFrame(
        {"tick": scores.ticks, "score": scores.scores, "channel": [channels[i] for i in scores.channel]}
    )
    if scores.decisions is not None:
        frame["decision"] = scores.decisions.astype(np.int64)
    frame.to_csv(path, index=False, lineterminator="\n")


def read_scores(path: Path) -> tuple[Labels, Matrix]:
    """Ticks and aggregated scores from a score file."""
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    try:
        frame = pd.read_csv(path)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DataError(f"{path}: unreadable score file: {e}") from e
    missing = {"tick", "score"} - set(frame.columns)
    if missing:
        raise DataError(f"{path}: missing columns {sorted(missing)}")
    ticks = pd.to_numeric(frame["tick"], errors="coerce")
    values = pd.to_numeric(frame["score"], errors="coerce")
    if ticks.isna().any() or values.isna().any():
        raise DataError(f"{path}: non-numeric tick or score")
    return ticks.to_numpy(dtype=np.int64), values.to_numpy(dtype=np.float64)
