"""Training command for diffbev CLI.

Docs: docs/cli/train.md

Commands:
- train: Train a model end to end and write its checkpoint and log
"""

from __future__ import annotations

from pathlib import Path

import click

from diffbev.cli.common import handle_errors
from diffbev.core.config import TrainConfig, load_config
from diffbev.data.dataset import load_dataset, prepare_training, write_dataset
from diffbev.training.checkpoint import load_checkpoint
from diffbev.training.trainer import train as run_training


@click.command()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None, help="Config file (defaults apply otherwise).")
@click.option("--resume", "resume_path", type=click.Path(path_type=Path), default=None, help="Checkpoint to continue from.")
@click.option("--generate", "generate_count", type=int, default=None, help="Generate N scenes into the dataset directory first.")
@click.option("--detach-diffusion", is_flag=True, help="Stop segmentation gradients at the refined feature.")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None, help="Output directory (default: config output_dir).")
def train(
    config_path: Path | None,
    resume_path: Path | None,
    generate_count: int | None,
    detach_diffusion: bool,
    out_dir: Path | None,
) -> None:
    """Train DiffBEV on a synthetic dataset.

    Writes train_log.csv and checkpoint.dbt to the output directory.
    """
    with handle_errors():
        config = load_config(config_path) if config_path else TrainConfig()
        if detach_diffusion:
            config = config.replace(detach_diffusion=True)
        data_dir = Path(config.dataset)
        if generate_count:
            write_dataset(data_dir, range(generate_count), config, config.workers)
        samples = prepare_training(load_dataset(data_dir, config))
        resume = load_checkpoint(resume_path) if resume_path else None

        output = out_dir or Path(config.output_dir)
        result = run_training(config, samples, out_dir=output, resume=resume)
        if result.history:
            last = result.history[-1]
            click.echo(
                f"Finished {int(last['iter']) + 1} iterations: "
                f"l_total={last['l_total']:.4f} (l_wce={last['l_wce']:.4f}, "
                f"l_depth={last['l_depth']:.4f}, l_diff={last['l_diff']:.4f})"
            )
        click.echo(f"Checkpoint: {result.checkpoint_path}")
