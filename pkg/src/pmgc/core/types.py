from enum import StrEnum, unique

import numpy as np
import numpy.typing as npt

Matrix = npt.NDArray[np.float64]
Labels = npt.NDArray[np.int64]
ParamStore = dict[str, Matrix]  # insertion order is the canonical parameter order


@unique
class Mode(StrEnum):
    """Model variant. Everything except FULL is an ablation."""

    FULL = "full"
    STATIC_ONLY = "static-only"  # w/o dynamic graphs, predictions from the static graph branch
    DYNAMIC_ONLY = "dynamic-only"  # w/o static graph, no cohesion loss
    NON_PROSPECTIVE = "non-prospective"  # graphs built from the context only
    STATIC_DYNAMIC = "static+dynamic"  # static branch averaged with the dynamic ones, no cohesion loss
    SIMPLE_LOSS = "simple-loss"  # cohesion loss replaced by summed distances to the static graph

    @property
    def uses_cohesion(self) -> bool:
        return self in (Mode.FULL, Mode.NON_PROSPECTIVE, Mode.SIMPLE_LOSS)

    @property
    def uses_dynamic(self) -> bool:
        return self is not Mode.STATIC_ONLY


@unique
class Propagation(StrEnum):
    """Matrix used by the MixHop layers to aggregate neighbours."""

    ADJACENCY = "adjacency"  # D^-1/2 A D^-1/2
    LAPLACIAN = "laplacian"  # I - D^-1/2 A D^-1/2


@unique
class InitScheme(StrEnum):
    GLOROT_UNIFORM = "uniform-glorot"
    NORMAL = "normal"  # N(0, 0.1)


@unique
class Normalization(StrEnum):
    MINMAX = "minmax"
    ZSCORE = "zscore"


@unique
class ValMetric(StrEnum):
    """Loss used for best-epoch selection."""

    TOTAL = "total"
    PREDICTION = "prediction"


@unique
class StatsSource(StrEnum):
    """Error set used for median/IQR normalization of anomaly scores."""

    TEST = "test"
    VALIDATION = "validation"


@unique
class AnomalyKind(StrEnum):
    SPIKE = "spike"
    LEVEL_SHIFT = "level-shift"
    CORRELATION_BREAK = "correlation-break"


@unique
class F1Metric(StrEnum):
    POINTWISE = "pointwise"
    COMPOSITE = "composite"


@unique
class LossKind(StrEnum):
    FULL = "full"
    SIMPLE = "simple"


@unique
class LabParameterization(StrEnum):
    COSINE = "cosine"  # graphs generated from free embeddings through the cosine generator
    RAW = "raw"  # graphs are free matrices, symmetrized and clipped to [0, 1]


@unique
class LabInit(StrEnum):
    RANDOM = "random"
    UNIFORM = "uniform"  # every dynamic embedding starts equal to the static one


@unique
class SweepParam(StrEnum):
    """Hyperparameter varied by a sensitivity sweep."""

    LAMBDA = "lambda"
    K = "k"
    WINDOW = "window"
    PRED_WINDOW = "pred_window"

    @property
    def field(self) -> str:
        return "cohesion_weight" if self is SweepParam.LAMBDA else self.value
