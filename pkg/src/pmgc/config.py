import tomllib
from contextvars import ContextVar
from pathlib import Path
from typing import Any, Self

import pydash
from pydantic import Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict, TomlConfigSettingsSource

from pmgc.core.errors import ConfigError
from pmgc.core.models import LabConfig, TrainConfig
from pmgc.core.types import Mode, Normalization, Propagation, StatsSource, ValMetric

_config_file: ContextVar[Path | None] = ContextVar("config_file", default=None)


class RunConfig(BaseSettings):
    """
    Settings of one CLI invocation.

    Sources, lowest to highest precedence: defaults, `PMGC_*` environment variables (`PMGC_LAB__STEPS` for the
    `lab` table), the TOML file given with `--config`, command-line flags.
    """

    model_config = SettingsConfigDict(env_prefix="PMGC_", env_nested_delimiter="__", extra="forbid")

    # model
    window: int = Field(40, description="window length w")
    pred_window: int = Field(5, description="prediction window p")
    hidden: int = Field(64, description="hidden size d")
    k: int = Field(5, description="dynamic graphs per window")
    beta: float = Field(0.05, description="MixHop retention ratio")
    tau: float = Field(1.0, description="graph similarity temperature")
    cohesion_weight: float = Field(1e-5, description="cohesion loss weight lambda")
    mode: Mode = Field(Mode.FULL, description="model variant")
    propagation: Propagation = Field(Propagation.ADJACENCY, description="normalized adjacency or Laplacian")

    # training
    epochs: int = Field(10, description="training epochs")
    learning_rate: float = Field(1e-3, description="Adam learning rate")
    batch_size: int = Field(32, description="mini-batch size")
    seed: int = Field(0, description="seed for initialization and shuffling")
    validation_fraction: float = Field(0.2, description="chronologically last share of training windows")
    val_metric: ValMetric = Field(ValMetric.TOTAL, description="loss used for best-epoch selection")
    normalization: Normalization = Field(Normalization.MINMAX, description="per-channel scaling")
    downsample: int = Field(1, description="median down-sampling factor")

    # data and outputs
    fill_missing: bool = Field(False, description="forward-fill missing CSV cells instead of failing")
    train_path: Path | None = Field(None, description="training CSV")
    test_path: Path | None = Field(None, description="test CSV with a label column")
    checkpoint_path: Path = Field(Path("model.json"), description="checkpoint written by train, read by score")
    scores_path: Path = Field(Path("scores.csv"), description="score file written by score, read by eval")

    # scoring and evaluation
    stats: StatsSource = Field(StatsSource.TEST, description="errors used for median/IQR normalization")
    threshold: float | None = Field(None, description="decision threshold for score files and reports")
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2], description="seeds for ablate, sweep and verify")

    log_level: str = Field("INFO", description="root logger level")
    lab: LabConfig = Field(default_factory=LabConfig, description="cohesion lab settings")

    @model_validator(mode="after")
    def check_train_config(self) -> Self:
        self.train_config()
        return self

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,  # noqa: ARG003
        file_secret_settings: PydanticBaseSettingsSource,  # noqa: ARG003
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        sources: list[PydanticBaseSettingsSource] = [init_settings]
        if (config_file := _config_file.get()) is not None:
            sources.append(TomlConfigSettingsSource(settings_cls, toml_file=config_file))
        sources.append(env_settings)
        return tuple(sources)

    def train_config(self) -> TrainConfig:
        return TrainConfig.model_validate(self.model_dump(include=set(TrainConfig.model_fields)))

    @classmethod
    def load(cls, config_file: Path | None = None, overrides: dict[str, Any] | None = None) -> Self:
        """
        Build the settings from an optional TOML file and command-line overrides (None values are ignored).

        Raises:
            ConfigError: Unreadable file, unknown key or invalid value.
        """
        if config_file is not None and not config_file.is_file():
            raise ConfigError(f"config file not found: {config_file}")
        token = _config_file.set(config_file)
        try:
            return cls(**pydash.omit_by(overrides or {}, lambda v: v is None))
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{config_file}: {e}") from e
        except ValidationError as e:
            raise ConfigError(_describe(e)) from e
        finally:
            _config_file.reset(token)


def _describe(error: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in e['loc']) or 'config'}: {e['msg']}" for e in error.errors())
