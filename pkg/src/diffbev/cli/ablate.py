"""Ablation command for diffbev CLI.

Docs: docs/cli/ablate.md

Commands:
- ablate: Train the condition/fusion/encoder grid and write its table
"""

from __future__ import annotations

from pathlib import Path

import click

from diffbev.cli.common import handle_errors
from diffbev.core.config import TrainConfig, load_config
from diffbev.data.dataset import load_dataset, prepare_training, write_dataset
from diffbev.training.ablate import run_ablation, write_ablation_csv


@click.command()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None, help="Base config file.")
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=Path("grid.csv"), show_default=True, help="Grid CSV.")
@click.option("--generate", "generate_count", type=int, default=None, help="Generate N scenes into the dataset directory first.")
@click.option("--with-baseline", is_flag=True, help="Append a run without the diffusion branch.")
def ablate(config_path: Path | None, out_path: Path, generate_count: int | None, with_baseline: bool) -> None:
    """Train every condition × fusion pair and both encoder modes.

    Rows report mIoU, mAP, parameter count and GMACs of one inference pass.
    """
    with handle_errors():
        config = load_config(config_path) if config_path else TrainConfig()
        data_dir = Path(config.dataset)
        if generate_count:
            write_dataset(data_dir, range(generate_count), config, config.workers)
        samples = prepare_training(load_dataset(data_dir, config))
        rows = run_ablation(config, samples, out_dir=Path(config.output_dir) / "ablation", with_baseline=with_baseline)
        write_ablation_csv(rows, out_path)
        for row in rows:
            click.echo(
                f"{row.table:<16} {row.condition:<5} {row.fusion:<15} {row.encoder:<14} "
                f"mIoU={row.miou:.4f} mAP={row.map:.4f} params={row.params} GMACs={row.gmacs:.4f}"
            )
        click.echo(f"Grid: {out_path}")
