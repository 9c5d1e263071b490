import logging
import tomllib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import ValidationError

from pmgc.core.errors import DataError, ShapeError
from pmgc.core.forecaster import WindowSample
from pmgc.core.models import AnomalySpec, NormalizationRecord, SynthSpec
from pmgc.core.types import AnomalyKind, Labels, Matrix, Normalization

logger = logging.getLogger(__name__)

LABEL_COLUMN = "label"
MISSING_TOKENS = frozenset({"", "nan", "na", "null"})
LATENT_PERIODS = (20.0, 200.0)  # ticks


@dataclass(frozen=True, slots=True)
class RawSeries:
    """N channels over T ticks, optionally with one binary label per tick."""

    values: Matrix  # (N, T)
    channels: list[str]
    labels: Labels | None = None  # (T,)

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, slots=True)
class NormalizationStats:
    """Per-channel affine map x -> (x - center) / scale fitted on training data."""

    method: Normalization
    center: Matrix  # (N,) min or mean
    scale: Matrix  # (N,) max - min or std

    @classmethod
    def fit(cls, series: RawSeries, method: Normalization = Normalization.MINMAX) -> "NormalizationStats":
        match method:
            case Normalization.MINMAX:
                low = series.values.min(axis=1)
                return cls(method, low, series.values.max(axis=1) - low)
            case Normalization.ZSCORE:
                return cls(method, series.values.mean(axis=1), series.values.std(axis=1))

    @classmethod
    def from_record(cls, record: NormalizationRecord) -> "NormalizationStats":
        return cls(record.method, np.array(record.center), np.array(record.scale))

    def to_record(self) -> NormalizationRecord:
        return NormalizationRecord(method=self.method, center=self.center.tolist(), scale=self.scale.tolist())


# csv


def load_csv(path: Path, has_labels: bool = False, fill_missing: bool = False) -> RawSeries:
    """
    Read a header + one-row-per-tick CSV. Columns become channels; a final `label` column is split off when requested.

    Raises:
        DataError: Missing or empty file, ragged rows, non-numeric or missing cells (unless `fill_missing`),
            non-binary labels.
    """
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError as e:
        raise DataError(f"{path}: empty file") from e
    except pd.errors.ParserError as e:
        raise DataError(f"{path}: ragged rows: {e}") from e
    if frame.empty:
        raise DataError(f"{path}: no data rows")
    short = frame.isna().any(axis=1).to_numpy()
    if short.any():
        raise DataError(f"{path}: line {int(short.argmax()) + 2} has fewer fields than the header")

    labels: Labels | None = None
    if has_labels:
        if LABEL_COLUMN not in frame.columns:
            raise DataError(f"{path}: no '{LABEL_COLUMN}' column")
        raw_labels = _numeric_column(path, frame.pop(LABEL_COLUMN), LABEL_COLUMN, fill_missing=False)
        if not np.isin(raw_labels, (0.0, 1.0)).all():
            raise DataError(f"{path}: labels must be 0 or 1")
        labels = raw_labels.astype(np.int64)
    if frame.shape[1] == 0:
        raise DataError(f"{path}: no channel columns")

    columns = [_numeric_column(path, frame[name], str(name), fill_missing) for name in frame.columns]
    return RawSeries(values=np.vstack(columns), channels=[str(c) for c in frame.columns], labels=labels)


def has_label_column(path: Path) -> bool:
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    try:
        header = pd.read_csv(path, nrows=0, skipinitialspace=True)
    except pd.errors.EmptyDataError as e:
        raise DataError(f"{path}: empty file") from e
    return LABEL_COLUMN in header.columns


def _numeric_column(path: Path, raw: "pd.Series[str]", name: str, fill_missing: bool) -> Matrix:
    text = raw.str.strip()
    missing = text.str.lower().isin(MISSING_TOKENS)
    numeric = pd.to_numeric(text.where(~missing), errors="coerce")
    bad = numeric.isna() & ~missing
    if bad.any():
        row = int(bad.to_numpy().argmax())
        raise DataError(f"{path}: non-numeric value {text.iloc[row]!r} at line {row + 2}, column {name!r}")
    if missing.any():
        row = int(missing.to_numpy().argmax())
        if not fill_missing:
            raise DataError(f"{path}: missing value at line {row + 2}, column {name!r}")
        numeric = numeric.ffill()
        if numeric.isna().any():
            raise DataError(f"{path}: column {name!r} starts with missing values, nothing to forward-fill")
    values = numeric.to_numpy(dtype=np.float64)
    if not np.isfinite(values).all():
        raise DataError(f"{path}: non-finite value in column {name!r}")
    return values


def write_csv(series: RawSeries, path: Path) -> None:
    frame = pd.DataFrame(series.values.T, columns=series.channels)
    if series.labels is not None:
        frame[LABEL_COLUMN] = series.labels
    frame.to_csv(path, index=False, lineterminator="\n")


# preprocessing


def normalize_channels(series: RawSeries, stats: NormalizationStats) -> RawSeries:
    """Apply training statistics; constant channels map to 0 and test values may leave [0, 1]."""
    if stats.center.shape[0] != series.n_channels:
        raise ShapeError(f"normalization fitted on {stats.center.shape[0]} channels, series has {series.n_channels}")
    scale = stats.scale[:, None]
    safe = np.where(scale > 0, scale, 1.0)
    values = np.where(scale > 0, (series.values - stats.center[:, None]) / safe, 0.0)
    return replace(series, values=values)


def downsample_median(series: RawSeries, every: int) -> RawSeries:
    """
    One tick per `every` ticks using the median of each block; a trailing partial block is dropped.

    A block is labeled anomalous when any of its ticks is.
    """
    if every < 1:
        raise DataError(f"downsample factor must be >= 1, got {every}")
    if every == 1:
        return series
    blocks = series.length // every
    if blocks == 0:
        raise DataError(f"series of {series.length} ticks is shorter than one block of {every}")
    cut = blocks * every
    values = np.median(series.values[:, :cut].reshape(series.n_channels, blocks, every), axis=2)
    labels = None if series.labels is None else series.labels[:cut].reshape(blocks, every).max(axis=1)
    return RawSeries(values=values, channels=series.channels, labels=labels)


def window_array(values: Matrix, window: int) -> Matrix:
    """All stride-1 windows as one read-only array of shape (T - w + 1, N, w)."""
    if values.shape[1] < window:
        raise ShapeError(f"series has {values.shape[1]} ticks, fewer than the window length {window}")
    return np.moveaxis(sliding_window_view(values, window, axis=1), 0, 1)


def make_windows(series: RawSeries | Matrix, window: int, pred_window: int) -> list[WindowSample]:
    """T - w + 1 windows; the window ending at tick t covers ticks t - w + 1 .. t."""
    values = series.values if isinstance(series, RawSeries) else series
    if not 0 < pred_window < window:
        raise ShapeError(f"pred_window must be in (0, {window}), got {pred_window}")
    stacked = window_array(values, window)
    return [WindowSample.from_full(full, pred_window, end_tick=i + window - 1) for i, full in enumerate(stacked)]


# synthetic data


def load_synth_spec(path: Path) -> SynthSpec:
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    try:
        return SynthSpec.model_validate(tomllib.loads(path.read_text(encoding="utf-8")))
    except (tomllib.TOMLDecodeError, ValidationError) as e:
        raise DataError(f"{path}: invalid synth spec: {e}") from e


def synth_generate(spec: SynthSpec) -> tuple[RawSeries, RawSeries]:
    """
    Correlated sinusoid mixtures with Gaussian noise; anomalies are injected into the test part only.

    Each channel mixes 2-3 of the shared latents with random signed weights plus an offset. The test series
    continues the same latent clocks after the training series.

    Anomalies, sized in standard deviations of the channel's clean training signal:
    - spike: adds magnitude * std at each tick of its extent
    - level-shift: adds the same offset over the whole extent
    - correlation-break: the channel follows an unrelated sinusoid with the channel's own mean and std,
      so its marginal distribution stays normal (magnitude is not used)

    Raises:
        DataError: If an anomaly falls outside the test range or names an unknown channel.
    """
    rng = np.random.default_rng(spec.seed)
    n, total = spec.n_channels, spec.t_train + spec.t_test
    ticks = np.arange(total)

    latents = _sinusoids(rng, spec.n_latents, ticks)
    mixing = np.zeros((n, spec.n_latents))
    for channel in range(n):
        chosen = rng.choice(spec.n_latents, size=int(rng.integers(2, 4)), replace=False)
        mixing[channel, chosen] = rng.uniform(0.5, 1.5, chosen.size) * rng.choice([-1.0, 1.0], chosen.size)
    offsets = rng.uniform(-1.0, 1.0, n)
    clean = mixing @ latents + offsets[:, None]
    noise = rng.normal(0.0, spec.noise_std, (n, total))
    values = clean + noise

    mean = clean[:, : spec.t_train].mean(axis=1)
    std = clean[:, : spec.t_train].std(axis=1)
    labels = np.zeros(spec.t_test, dtype=np.int64)
    for anomaly in [*spec.anomalies, *_place_auto_anomalies(spec, rng)]:
        if anomaly.start + anomaly.duration > spec.t_test:
            raise DataError(
                f"anomaly {anomaly.kind} at {anomaly.start} (+{anomaly.duration}) exceeds test length {spec.t_test}"
            )
        channel = anomaly.channel if anomaly.channel is not None else int(rng.integers(n))
        if channel >= n:
            raise DataError(f"anomaly channel {channel} out of range for {n} channels")
        span = slice(spec.t_train + anomaly.start, spec.t_train + anomaly.start + anomaly.duration)
        match anomaly.kind:
            case AnomalyKind.SPIKE | AnomalyKind.LEVEL_SHIFT:
                values[channel, span] += anomaly.magnitude * std[channel]
            case AnomalyKind.CORRELATION_BREAK:
                replacement = _sinusoids(rng, 1, ticks[span])[0] * np.sqrt(2.0)
                values[channel, span] = mean[channel] + std[channel] * replacement + noise[channel, span]
        labels[anomaly.start : anomaly.start + anomaly.duration] = 1
        logger.debug("injected %s on channel %d at test tick %d", anomaly.kind, channel, anomaly.start)

    channels = [f"c{i}" for i in range(n)]
    train = RawSeries(values=values[:, : spec.t_train], channels=channels)
    test = RawSeries(values=values[:, spec.t_train :], channels=channels, labels=labels)
    return train, test


def _sinusoids(rng: np.random.Generator, count: int, ticks: Matrix) -> Matrix:
    periods = rng.uniform(*LATENT_PERIODS, count)
    phases = rng.uniform(0.0, 2.0 * np.pi, count)
    return np.sin(2.0 * np.pi * ticks[None, :] / periods[:, None] + phases[:, None])


def _place_auto_anomalies(spec: SynthSpec, rng: np.random.Generator) -> list[AnomalySpec]:
    auto = spec.auto_anomalies
    if auto is None:
        return []
    slot = spec.t_test // auto.count
    if slot < auto.duration + 1:
        raise DataError(f"{auto.count} anomalies of duration {auto.duration} do not fit in {spec.t_test} test ticks")
    return [
        AnomalySpec(
            kind=auto.kind,
            start=i * slot + int(rng.integers(0, slot - auto.duration)),
            duration=auto.duration,
            magnitude=auto.magnitude,
        )
        for i in range(auto.count)
    ]
