from pathlib import Path
from typing import Annotated, Any

import pydash
import typer

from pmgc.cli.app import EXIT_VERIFICATION_FAILED, ConfigOption, SeedOption, SeedsOption, app, handle_errors, load_config
from pmgc.core.services.lab import closed_form_check, run_lab, verify_propositions, write_trajectory
from pmgc.core.types import LabInit, LabParameterization, LossKind

StepsOption = Annotated[int | None, typer.Option("--steps", help="Adam steps")]
NodesOption = Annotated[int | None, typer.Option("--nodes", help="Nodes per graph")]
DimOption = Annotated[int | None, typer.Option("--dim", help="Embedding width")]
LabKOption = Annotated[int | None, typer.Option("--k", help="Dynamic graphs per sample")]
LrOption = Annotated[float | None, typer.Option("--lr", help="Adam learning rate")]
SamplesOption = Annotated[int | None, typer.Option("--samples", help="Dynamic-graph sets sharing one static graph")]
ParamOption = Annotated[LabParameterization | None, typer.Option("--parameterization", help="Graph parameterization")]


@app.command()
@handle_errors
def verify(
    config: ConfigOption = None,
    seeds: SeedsOption = None,
    steps: StepsOption = None,
    nodes: NodesOption = None,
    dim: DimOption = None,
    k: LabKOption = None,
    lr: LrOption = None,
    samples: SamplesOption = None,
    parameterization: ParamOption = None,
    tolerance: Annotated[float, typer.Option("--tolerance", help="Collapse tolerance (Frobenius)")] = 1e-2,
    margin: Annotated[float, typer.Option("--margin", help="Required improvement below k log k")] = 0.1,
    diversity_floor: Annotated[float, typer.Option("--diversity-floor", help="Minimum squared pairwise distance")] = 0.05,
) -> None:
    """Check collapse under the simple loss and diversity under the contrastive loss; exit 2 on failure."""
    cfg = load_config(config, seeds=seeds, lab=_lab_overrides(steps, nodes, dim, k, lr, samples, parameterization))
    result = verify_propositions(cfg.lab, cfg.seeds, tolerance, margin, diversity_floor)
    for check in result.checks:
        if check.expected_failure:
            status = "COLLAPSED (expected)" if not check.passed else "DIVERSE"
        else:
            status = "PASS" if check.passed else "FAIL"
        typer.echo(f"{check.name} {status}  {check.detail}")
    if not result.passed:
        raise typer.Exit(EXIT_VERIFICATION_FAILED)


@app.command()
@handle_errors
def lab(
    config: ConfigOption = None,
    loss: Annotated[LossKind | None, typer.Option("--loss", help="Cohesion loss to optimize")] = None,
    init: Annotated[LabInit | None, typer.Option("--init", help="Initialization of the dynamic graphs")] = None,
    seed: SeedOption = None,
    steps: StepsOption = None,
    nodes: NodesOption = None,
    dim: DimOption = None,
    k: LabKOption = None,
    lr: LrOption = None,
    samples: SamplesOption = None,
    parameterization: ParamOption = None,
    trajectory: Annotated[Path | None, typer.Option("--trajectory", help="Write the loss trajectory as CSV")] = None,
    closed_form: Annotated[bool, typer.Option("--closed-form", help="Also print closed-form cross-checks")] = False,
) -> None:
    """One cohesion-loss optimization run with a plain-text report."""
    overrides = _lab_overrides(steps, nodes, dim, k, lr, samples, parameterization) | pydash.omit_by(
        {"loss_kind": loss, "init": init, "seed": seed}, lambda v: v is None
    )
    cfg = load_config(config, lab=overrides)
    report = run_lab(cfg.lab)
    typer.echo(f"loss {report.config.loss_kind}, {report.config.parameterization}, init {report.config.init}")
    typer.echo(f"initial loss          {report.initial_loss:.9g}")
    typer.echo(f"final loss            {report.final_loss:.9g}")
    typer.echo(f"k log k               {report.uniform_reference:.9g}")
    typer.echo(f"max dist to static    {report.max_static_distance:.6g}")
    typer.echo(f"min pairwise dist     {report.min_pairwise_distance:.6g}")
    for i, sample in enumerate(report.per_sample):
        typer.echo(
            f"  sample {i}: loss {sample.loss:.6g}, max to static {sample.max_static_distance:.6g}, "
            f"min pairwise {sample.min_pairwise_distance:.6g}"
        )
    if report.diverged:
        typer.echo(f"diverged after {len(report.trajectory)} evaluations", err=True)
    if trajectory is not None:
        write_trajectory(report, trajectory)
        typer.echo(f"trajectory: {trajectory}")
    if closed_form:
        for check in closed_form_check((2, 3, 5), (0.0, 0.5, 1.0)):
            typer.echo(
                f"  {check.case:<11} k={check.k} c={check.c:<4} closed {check.closed_form:.12f}  direct {check.direct:.12f}"
            )


def _lab_overrides(
    steps: int | None,
    nodes: int | None,
    dim: int | None,
    k: int | None,
    lr: float | None,
    samples: int | None,
    parameterization: LabParameterization | None,
) -> dict[str, Any]:
    values = {
        "steps": steps,
        "n_nodes": nodes,
        "hidden": dim,
        "k": k,
        "learning_rate": lr,
        "samples": samples,
        "parameterization": parameterization,
    }
    return pydash.omit_by(values, lambda v: v is None)
