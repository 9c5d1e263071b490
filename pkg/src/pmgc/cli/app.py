import functools
import logging
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Annotated, Any

import typer

from pmgc.config import RunConfig
from pmgc.core.errors import UserError
from pmgc.core.types import Mode

logger = logging.getLogger(__name__)

app = typer.Typer(
    name="pmgc",
    help="Multi-graph forecasting anomaly detector for multivariate time series.",
    no_args_is_help=True,
    add_completion=False,
    pretty_exceptions_enable=False,
)

EXIT_USER_ERROR = 1
EXIT_VERIFICATION_FAILED = 2

ConfigOption = Annotated[Path | None, typer.Option("--config", help="TOML config file")]
SeedOption = Annotated[int | None, typer.Option("--seed", help="Seed for initialization and shuffling")]
SeedsOption = Annotated[list[int] | None, typer.Option("--seeds", help="Seeds to average over (repeatable)")]
ModeOption = Annotated[Mode | None, typer.Option("--mode", help="Model variant")]
EpochsOption = Annotated[int | None, typer.Option("--epochs", help="Training epochs")]
WindowOption = Annotated[int | None, typer.Option("--window", help="Window length w")]
PredWindowOption = Annotated[int | None, typer.Option("--pred-window", help="Prediction window p")]
KOption = Annotated[int | None, typer.Option("--k", help="Dynamic graphs per window")]
HiddenOption = Annotated[int | None, typer.Option("--hidden", help="Hidden size d")]
LambdaOption = Annotated[float | None, typer.Option("--lambda", help="Cohesion loss weight")]
TauOption = Annotated[float | None, typer.Option("--tau", help="Graph similarity temperature")]
OutOption = Annotated[Path | None, typer.Option("--out", help="Output path")]


def handle_errors[**P, R](func: Callable[P, R]) -> Callable[P, R]:
    """Report expected failures as one line on stderr with exit code 1, without a traceback."""

    @functools.wraps(func)
    def wrapper(*args: P.args, **kwargs: P.kwargs) -> R:
        try:
            return func(*args, **kwargs)
        except UserError as e:
            logger.debug("command failed", exc_info=True)
            typer.echo(f"error: {e}", err=True)
            raise typer.Exit(EXIT_USER_ERROR) from e
        except OSError as e:
            typer.echo(f"error: {e.strerror or e}: {e.filename}", err=True)
            raise typer.Exit(EXIT_USER_ERROR) from e

    return wrapper


def load_config(config_file: Path | None, **overrides: Any) -> RunConfig:  # noqa: ANN401
    config = RunConfig.load(config_file, overrides)
    setup_logging(config.log_level)
    return config


def setup_logging(level: str) -> None:
    logging.basicConfig(
        level=level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def model_overrides(
    seed: int | None = None,
    mode: Mode | None = None,
    epochs: int | None = None,
    window: int | None = None,
    pred_window: int | None = None,
    k: int | None = None,
    hidden: int | None = None,
    lambda_: float | None = None,
    tau: float | None = None,
) -> dict[str, Any]:
    """Training flags keyed by their settings names."""
    return {
        "seed": seed,
        "mode": mode,
        "epochs": epochs,
        "window": window,
        "pred_window": pred_window,
        "k": k,
        "hidden": hidden,
        "cohesion_weight": lambda_,
        "tau": tau,
    }


def require_path(path: Path | None, what: str) -> Path:
    if path is None:
        raise UserError(f"no {what} given (argument or config file)")
    return path
