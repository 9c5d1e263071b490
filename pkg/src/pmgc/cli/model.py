from pathlib import Path
from typing import Annotated

import typer

from pmgc.cli.app import (
    ConfigOption,
    EpochsOption,
    HiddenOption,
    KOption,
    LambdaOption,
    ModeOption,
    OutOption,
    PredWindowOption,
    SeedOption,
    TauOption,
    WindowOption,
    app,
    handle_errors,
    load_config,
    model_overrides,
    require_path,
)
from pmgc.core.models import TrainHistory
from pmgc.core.services import experiment
from pmgc.core.services.checkpoint import load_checkpoint, save_checkpoint
from pmgc.core.services.data import has_label_column, load_csv
from pmgc.core.services.scoring import write_scores
from pmgc.core.types import StatsSource


@app.command()
@handle_errors
def train(
    train_csv: Annotated[Path | None, typer.Argument(help="Training CSV, one column per channel")] = None,
    config: ConfigOption = None,
    seed: SeedOption = None,
    mode: ModeOption = None,
    epochs: EpochsOption = None,
    window: WindowOption = None,
    pred_window: PredWindowOption = None,
    k: KOption = None,
    hidden: HiddenOption = None,
    lambda_: LambdaOption = None,
    tau: TauOption = None,
    out: OutOption = None,
) -> None:
    """Train a model and write its checkpoint."""
    cfg = load_config(
        config,
        train_path=train_csv,
        checkpoint_path=out,
        **model_overrides(seed, mode, epochs, window, pred_window, k, hidden, lambda_, tau),
    )
    series = load_csv(require_path(cfg.train_path, "training CSV"), fill_missing=cfg.fill_missing)
    checkpoint = experiment.fit(series, cfg.train_config())
    save_checkpoint(checkpoint, cfg.checkpoint_path)
    _print_history(checkpoint.history)
    typer.echo(f"checkpoint: {cfg.checkpoint_path}")


@app.command()
@handle_errors
def score(
    checkpoint_file: Annotated[Path | None, typer.Argument(help="Checkpoint written by `train`")] = None,
    test_csv: Annotated[Path | None, typer.Argument(help="Test CSV; a label column is ignored")] = None,
    config: ConfigOption = None,
    stats: Annotated[StatsSource | None, typer.Option("--stats", help="Errors used for median/IQR")] = None,
    threshold: Annotated[float | None, typer.Option("--threshold", help="Add decisions: score > threshold")] = None,
    out: OutOption = None,
) -> None:
    """Score every tick of a test series that ends a full window."""
    cfg = load_config(
        config, checkpoint_path=checkpoint_file, test_path=test_csv, scores_path=out, stats=stats, threshold=threshold
    )
    checkpoint = load_checkpoint(cfg.checkpoint_path)
    test_path = require_path(cfg.test_path, "test CSV")
    test = load_csv(test_path, has_labels=has_label_column(test_path), fill_missing=cfg.fill_missing)
    scores = experiment.score(checkpoint, test, cfg.stats, cfg.threshold)
    write_scores(scores, checkpoint.channels, cfg.scores_path)
    flagged = "" if scores.decisions is None else f", {int(scores.decisions.sum())} flagged"
    typer.echo(f"{cfg.scores_path}: {scores.scores.size} ticks scored from tick {scores.first_tick}{flagged}")


def _print_history(history: TrainHistory) -> None:
    typer.echo(f"{'epoch':>5}  {'train':>12}  {'pred':>12}  {'cohesion':>12}  {'val':>12}")
    for record in history.epochs:
        marker = " *" if record.epoch == history.best_epoch else ""
        typer.echo(
            f"{record.epoch:>5}  {record.train_loss:>12.6g}  {record.train_prediction:>12.6g}  "
            f"{record.train_cohesion:>12.6g}  {record.val_loss:>12.6g}{marker}"
        )
    typer.echo(f"best epoch: {history.best_epoch} (validation loss {history.best.val_loss:.6g})")
