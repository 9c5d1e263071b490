import logging
from pathlib import Path
from typing import Annotated

import typer

from pmgc.cli.app import ConfigOption, app, handle_errors, load_config
from pmgc.core.services.data import load_synth_spec, synth_generate, write_csv

logger = logging.getLogger(__name__)

TRAIN_FILE = "train.csv"
TEST_FILE = "test.csv"


@app.command()
@handle_errors
def synth(
    spec_file: Annotated[Path, typer.Argument(help="TOML synth spec")],
    out: Annotated[Path, typer.Option("--out", help="Output directory")] = Path(),
    config: ConfigOption = None,
) -> None:
    """Generate train.csv and test.csv (with a label column) from a seeded synth spec."""
    load_config(config)
    spec = load_synth_spec(spec_file)
    train, test = synth_generate(spec)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(train, out / TRAIN_FILE)
    write_csv(test, out / TEST_FILE)
    anomalous = 0 if test.labels is None else int(test.labels.sum())
    logger.info("synth seed %d: %d channels, %d anomalous test ticks", spec.seed, spec.n_channels, anomalous)
    typer.echo(f"{out / TRAIN_FILE}: {train.length} ticks x {train.n_channels} channels")
    typer.echo(f"{out / TEST_FILE}: {test.length} ticks, {anomalous} labeled anomalous")
