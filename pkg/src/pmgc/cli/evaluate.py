import logging
from pathlib import Path
from typing import Annotated

import numpy as np
import typer

from pmgc.cli.app import (
    ConfigOption,
    EpochsOption,
    HiddenOption,
    KOption,
    LambdaOption,
    PredWindowOption,
    SeedsOption,
    TauOption,
    WindowOption,
    app,
    handle_errors,
    load_config,
    model_overrides,
    require_path,
)
from pmgc.config import RunConfig
from pmgc.core.errors import DataError
from pmgc.core.services import experiment
from pmgc.core.services.data import RawSeries, downsample_median, load_csv
from pmgc.core.services.experiment import ExperimentResult
from pmgc.core.services.metrics import EvaluationReport, MetricResult, evaluate
from pmgc.core.services.scoring import read_scores
from pmgc.core.types import F1Metric, Mode, SweepParam

logger = logging.getLogger(__name__)


@app.command("eval")
@handle_errors
def eval_(
    scores_file: Annotated[Path | None, typer.Argument(help="Score file written by `score`")] = None,
    test_csv: Annotated[Path | None, typer.Argument(help="Test CSV with a label column")] = None,
    config: ConfigOption = None,
    metric: Annotated[F1Metric | None, typer.Option("--metric", help="Report only this F1 flavor")] = None,
    threshold: Annotated[float | None, typer.Option("--threshold", help="Also report metrics at this threshold")] = None,
    json_: Annotated[bool, typer.Option("--json", help="Print the report as JSON")] = False,
) -> None:
    """Best-threshold point-wise F1 and F1-composite of a score file against test labels."""
    cfg = load_config(config, scores_path=scores_file, test_path=test_csv, threshold=threshold)
    ticks, scores = read_scores(cfg.scores_path)
    test = load_csv(require_path(cfg.test_path, "test CSV"), has_labels=True, fill_missing=cfg.fill_missing)
    labels = downsample_median(test, cfg.downsample).labels
    if labels is None or ticks.size == 0 or ticks.min() < 0 or ticks.max() >= labels.size:
        raise DataError(f"score ticks do not fall inside the {0 if labels is None else labels.size} labeled test ticks")
    aligned = labels[ticks]
    if not aligned.any():
        logger.warning("no anomalous ticks in the scored region; every metric is 0 by convention")
        typer.echo("warning: no anomalous ticks in the scored region; metrics are 0 by convention", err=True)

    report = evaluate(scores, aligned, cfg.threshold)
    if json_:
        typer.echo(report.model_dump_json(indent=2))
        return
    _print_report(report, metric)


@app.command()
@handle_errors
def ablate(
    train_csv: Annotated[Path | None, typer.Argument(help="Training CSV")] = None,
    test_csv: Annotated[Path | None, typer.Argument(help="Test CSV with a label column")] = None,
    config: ConfigOption = None,
    modes: Annotated[list[Mode] | None, typer.Option("--mode", help="Variant to include (repeatable, default all)")] = None,
    seeds: SeedsOption = None,
    epochs: EpochsOption = None,
    window: WindowOption = None,
    pred_window: PredWindowOption = None,
    k: KOption = None,
    hidden: HiddenOption = None,
    lambda_: LambdaOption = None,
    tau: TauOption = None,
) -> None:
    """Train and evaluate every model variant over the seeds."""
    cfg = load_config(
        config,
        train_path=train_csv,
        test_path=test_csv,
        seeds=seeds,
        **model_overrides(None, None, epochs, window, pred_window, k, hidden, lambda_, tau),
    )
    train, test = _load_pair(cfg)
    results = experiment.ablate(train, test, cfg.train_config(), modes or list(Mode), cfg.seeds)
    _print_results("mode", [str(r.config.mode) for r in results], results)


@app.command()
@handle_errors
def sweep(
    param: Annotated[SweepParam, typer.Argument(help="Hyperparameter to vary")],
    values: Annotated[list[float], typer.Argument(help="Values to try")],
    train_csv: Annotated[Path | None, typer.Option("--train", help="Training CSV")] = None,
    test_csv: Annotated[Path | None, typer.Option("--test", help="Test CSV with a label column")] = None,
    config: ConfigOption = None,
    seeds: SeedsOption = None,
    epochs: EpochsOption = None,
    hidden: HiddenOption = None,
) -> None:
    """Sensitivity of detection quality to one hyperparameter."""
    cfg = load_config(
        config,
        train_path=train_csv,
        test_path=test_csv,
        seeds=seeds,
        **model_overrides(epochs=epochs, hidden=hidden),
    )
    train, test = _load_pair(cfg)
    results = experiment.sweep(train, test, cfg.train_config(), param, values, cfg.seeds)
    _print_results(str(param), [f"{v:g}" for v in values], results)


def _load_pair(cfg: RunConfig) -> tuple[RawSeries, RawSeries]:
    train = load_csv(require_path(cfg.train_path, "training CSV"), fill_missing=cfg.fill_missing)
    test = load_csv(require_path(cfg.test_path, "test CSV"), has_labels=True, fill_missing=cfg.fill_missing)
    return train, test


def _print_report(report: EvaluationReport, metric: F1Metric | None) -> None:
    typer.echo(f"ticks: {report.ticks}, events: {report.events}")
    rows: list[tuple[str, MetricResult | None]] = []
    if metric in (None, F1Metric.POINTWISE):
        rows += [("best point-wise F1", report.best_pointwise), ("point-wise F1 at threshold", report.pointwise)]
    if metric in (None, F1Metric.COMPOSITE):
        rows += [("best F1-composite", report.best_composite), ("F1-composite at threshold", report.composite)]
    for name, result in rows:
        if result is not None:
            typer.echo(
                f"{name}: {result.f1:.4f} (precision {result.precision:.4f}, recall {result.recall:.4f}, "
                f"threshold {result.threshold:.6g})"
            )


def _print_results(label: str, names: list[str], results: list[ExperimentResult]) -> None:
    typer.echo(f"{label:>16}  {'F1':>8}  {'F1-comp':>8}  per-seed F1 / F1-composite")
    for name, result in zip(names, results, strict=True):
        per_seed = ", ".join(f"{r.best_pointwise.f1:.3f}/{r.best_composite.f1:.3f}" for r in result.reports)
        typer.echo(f"{name:>16}  {result.mean_pointwise_f1:>8.4f}  {result.mean_composite_f1:>8.4f}  {per_seed}")
    best = int(np.argmax([r.mean_pointwise_f1 for r in results]))
    typer.echo(f"best by F1: {names[best]}")
