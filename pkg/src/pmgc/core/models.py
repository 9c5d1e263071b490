from typing import Self

from pydantic import BaseModel, ConfigDict, Field, model_validator

from pmgc.core.types import AnomalyKind, LabInit, LabParameterization, LossKind, Mode, Normalization, Propagation, ValMetric

CHECKPOINT_FORMAT = "pmgc-checkpoint/1"


class ModelConfig(BaseModel):
    """Architecture and loss hyperparameters. Defaults follow the published training setup."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    window: int = Field(default=40, ge=2, description="Window length w (context + prediction ticks)")
    pred_window: int = Field(default=5, ge=1, description="Prediction window p, the last p ticks of a window")
    hidden: int = Field(default=64, ge=1, description="Hidden size d of heads, node embeddings and GNN features")
    k: int = Field(default=5, ge=1, description="Number of dynamic graphs per window")
    beta: float = Field(default=0.05, ge=0.0, le=1.0, description="MixHop retention ratio")
    tau: float = Field(default=1.0, gt=0.0, description="Temperature of the graph similarity")
    cohesion_weight: float = Field(default=1e-5, ge=0.0, description="Weight lambda of the cohesion loss")
    mode: Mode = Field(default=Mode.FULL, description="Model variant (full model or an ablation)")
    propagation: Propagation = Field(default=Propagation.ADJACENCY, description="Normalized adjacency or Laplacian")

    @model_validator(mode="after")
    def check_windows(self) -> Self:
        if not 0 < self.pred_window < self.window:
            raise ValueError(f"pred_window must be in (0, window), got {self.pred_window} with window {self.window}")
        return self

    @property
    def context_window(self) -> int:
        return self.window - self.pred_window


class TrainConfig(ModelConfig):
    epochs: int = Field(default=10, ge=1, description="Training epochs")
    learning_rate: float = Field(default=1e-3, gt=0.0, description="Adam learning rate")
    batch_size: int = Field(default=32, ge=1, description="Mini-batch size")
    seed: int = Field(default=0, description="Seed for initialization and batch shuffling")
    validation_fraction: float = Field(default=0.2, gt=0.0, lt=1.0, description="Chronologically last share of windows")
    val_metric: ValMetric = Field(default=ValMetric.TOTAL, description="Loss used to pick the best epoch")
    normalization: Normalization = Field(default=Normalization.MINMAX, description="Per-channel scaling fitted on training data")
    downsample: int = Field(default=1, ge=1, description="Median down-sampling factor for training and scoring")


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    train_prediction: float
    train_cohesion: float
    val_loss: float = Field(description="Validation loss by the configured val_metric")
    val_prediction: float
    val_cohesion: float


class TrainHistory(BaseModel):
    epochs: list[EpochRecord] = Field(default_factory=list)
    best_epoch: int = Field(default=0, description="Index into epochs with the lowest validation loss")

    @property
    def best(self) -> EpochRecord:
        return self.epochs[self.best_epoch]


class ParamRecord(BaseModel):
    shape: tuple[int, int]
    data: list[float] = Field(description="Row-major values")


class NormalizationRecord(BaseModel):
    method: Normalization
    center: list[float] = Field(description="Per-channel min (minmax) or mean (zscore)")
    scale: list[float] = Field(description="Per-channel max - min (minmax) or std (zscore)")


class RobustStatsRecord(BaseModel):
    median: list[float]
    iqr: list[float]


class Checkpoint(BaseModel):
    """
    Trained model on disk, one JSON document.

    Layout: format tag, training config, channel names, normalization fitted on the training series,
    median/IQR of validation forecast errors, training history and every parameter in canonical order.
    """

    format: str = CHECKPOINT_FORMAT
    config: TrainConfig
    channels: list[str]
    normalization: NormalizationRecord
    validation_stats: RobustStatsRecord | None = None
    history: TrainHistory
    params: dict[str, ParamRecord]

    @property
    def n_channels(self) -> int:
        return len(self.channels)


class AnomalySpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: AnomalyKind
    start: int = Field(ge=0, description="First anomalous tick, relative to the start of the test series")
    duration: int = Field(default=1, ge=1, description="Number of anomalous ticks")
    magnitude: float = Field(default=6.0, gt=0.0, description="Size in units of the channel's standard deviation")
    channel: int | None = Field(default=None, ge=0, description="Affected channel, drawn from the seed when omitted")


class AutoAnomalies(BaseModel):
    """Anomalies placed at seeded, non-overlapping positions inside the test series."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: AnomalyKind
    count: int = Field(ge=1)
    duration: int = Field(default=1, ge=1)
    magnitude: float = Field(default=6.0, gt=0.0)


class SynthSpec(BaseModel):
    """Seeded synthetic dataset: correlated sinusoid mixtures with anomalies in the test part only."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_channels: int = Field(default=8, ge=1)
    t_train: int = Field(default=2000, ge=1)
    t_test: int = Field(default=1000, ge=1)
    seed: int = 0
    n_latents: int = Field(default=4, ge=3, description="Shared sinusoidal latents; each channel mixes 2-3 of them")
    noise_std: float = Field(default=0.05, ge=0.0)
    anomalies: list[AnomalySpec] = Field(default_factory=list)
    auto_anomalies: AutoAnomalies | None = None


class LabConfig(BaseModel):
    """Cohesion-loss optimization over free graph parameters, no forecasting in the loop."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_nodes: int = Field(default=5, ge=2, description="Nodes N per graph")
    hidden: int = Field(default=4, ge=1, description="Embedding width d (cosine parameterization)")
    k: int = Field(default=3, ge=2, description="Dynamic graphs per sample")
    tau: float = Field(default=1.0, gt=0.0)
    loss_kind: LossKind = LossKind.FULL
    steps: int = Field(default=2000, ge=1, description="Adam steps")
    learning_rate: float = Field(default=1e-2, gt=0.0)
    seed: int = 0
    samples: int = Field(default=1, ge=1, description="Independent dynamic-graph sets sharing one static graph")
    parameterization: LabParameterization = LabParameterization.COSINE
    init: LabInit = LabInit.RANDOM


class LabSample(BaseModel):
    loss: float
    max_static_distance: float
    min_pairwise_distance: float


class LabReport(BaseModel):
    """
    Outcome of one lab run. Distances are squared Frobenius norms; the trajectory holds the per-sample mean loss
    before every step and after the last one.
    """

    config: LabConfig
    trajectory: list[float] = Field(default_factory=list)
    max_static_distance: float = Field(ge=0.0)
    min_pairwise_distance: float = Field(ge=0.0)
    per_sample: list[LabSample] = Field(default_factory=list)
    uniform_reference: float = Field(description="k log k, the loss with every dynamic graph equal to the static one")
    diverged: bool = False

    @property
    def initial_loss(self) -> float:
        return self.trajectory[0]

    @property
    def final_loss(self) -> float:
        return self.trajectory[-1]
