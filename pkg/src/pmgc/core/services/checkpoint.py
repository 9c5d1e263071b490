import logging
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from pmgc.core.errors import CheckpointError, ShapeError
from pmgc.core.forecaster import check_params
from pmgc.core.models import CHECKPOINT_FORMAT, Checkpoint, ParamRecord, RobustStatsRecord, TrainConfig, TrainHistory
from pmgc.core.services.data import NormalizationStats
from pmgc.core.services.scoring import RobustStats
from pmgc.core.types import ParamStore

logger = logging.getLogger(__name__)


def build_checkpoint(
    config: TrainConfig,
    channels: list[str],
    normalization: NormalizationStats,
    history: TrainHistory,
    params: ParamStore,
    validation_stats: RobustStats | None = None,
) -> Checkpoint:
    return Checkpoint(
        config=config,
        channels=channels,
        normalization=normalization.to_record(),
        validation_stats=None
        if validation_stats is None
        else RobustStatsRecord(median=validation_stats.median.tolist(), iqr=validation_stats.iqr.tolist()),
        history=history,
        params={
            name: ParamRecord(shape=(value.shape[0], value.shape[1]), data=value.ravel().tolist())
            for name, value in params.items()
        },
    )


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> None:
    """Write the checkpoint as JSON. The same checkpoint always produces the same bytes."""
    path.write_text(checkpoint.model_dump_json(indent=1) + "\n", encoding="utf-8")
    logger.debug("checkpoint saved to %s", path)


def load_checkpoint(path: Path) -> Checkpoint:
    """
    Raises:
        CheckpointError: If the file is missing, unreadable, of another format or inconsistent with its config.
    """
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        checkpoint = Checkpoint.model_validate_json(path.read_bytes())
    except ValidationError as e:
        raise CheckpointError(f"{path}: invalid checkpoint: {e}") from e
    if checkpoint.format != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: unsupported format {checkpoint.format!r}, expected {CHECKPOINT_FORMAT!r}")
    try:
        check_params(checkpoint_params(checkpoint), checkpoint.n_channels, checkpoint.config)
    except ShapeError as e:
        raise CheckpointError(f"{path}: {e}") from e
    return checkpoint


def checkpoint_params(checkpoint: Checkpoint) -> ParamStore:
    params: ParamStore = {}
    for name, record in checkpoint.params.items():
        if len(record.data) != record.shape[0] * record.shape[1]:
            raise CheckpointError(f"parameter {name}: {len(record.data)} values do not fill shape {record.shape}")
        params[name] = np.array(record.data, dtype=np.float64).reshape(record.shape)
    return params


def checkpoint_validation_stats(checkpoint: Checkpoint) -> RobustStats | None:
    record = checkpoint.validation_stats
    if record is None:
        return None
    return RobustStats(median=np.array(record.median), iqr=np.array(record.iqr))
