"""Dataset generation command for diffbev CLI.

Docs: docs/cli/generate.md

Commands:
- generate: Write synthetic scenes and their manifest
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from diffbev.cli.common import EXIT_VALIDATION, handle_errors
from diffbev.core.config import TrainConfig, load_config
from diffbev.data.dataset import write_dataset


@click.command()
@click.option("--n", "count", type=int, required=True, help="Number of scenes to generate.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed of the first scene.")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True, help="Dataset directory.")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None, help="Config file with scene keys.")
@click.option("--workers", type=int, default=None, help="Generator threads (default: config value).")
def generate(count: int, seed: int, out_dir: Path, config_path: Path | None, workers: int | None) -> None:
    """Generate COUNT synthetic scenes with seeds SEED..SEED+COUNT-1.

    Each scene is written as scene_<seed>.dbt next to a manifest holding
    the hash of the scene configuration.
    """
    with handle_errors():
        if count < 1:
            click.echo("Error: --n must be >= 1", err=True)
            sys.exit(EXIT_VALIDATION)
        config = load_config(config_path) if config_path else TrainConfig()
        manifest = write_dataset(out_dir, range(seed, seed + count), config, workers or config.workers)
        click.echo(f"Wrote {len(manifest.files)} scenes to {out_dir}")
