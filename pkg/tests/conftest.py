import numpy as np
import pytest

from pmgc.core.models import AnomalySpec, SynthSpec, TrainConfig
from pmgc.core.services.data import RawSeries, synth_generate
from pmgc.core.types import AnomalyKind


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_config() -> TrainConfig:
    """Small enough for gradient checks and multi-epoch runs in well under a second per epoch."""
    return TrainConfig(window=12, pred_window=3, hidden=8, k=2, cohesion_weight=1e-5, epochs=2, batch_size=8)


@pytest.fixture
def synth_spec() -> SynthSpec:
    return SynthSpec(
        n_channels=4,
        t_train=240,
        t_test=120,
        seed=7,
        anomalies=[
            AnomalySpec(kind=AnomalyKind.SPIKE, start=40, channel=1),
            AnomalySpec(kind=AnomalyKind.LEVEL_SHIFT, start=80, duration=5, channel=2),
        ],
    )


@pytest.fixture
def synth_pair(synth_spec: SynthSpec) -> tuple[RawSeries, RawSeries]:
    return synth_generate(synth_spec)


@pytest.fixture
def windows(rng: np.random.Generator, tiny_config: TrainConfig) -> np.ndarray:
    """A batch of 5 random windows with 4 channels."""
    return rng.normal(size=(5, 4, tiny_config.window))
