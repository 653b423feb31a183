"""Inference command for diffbev CLI.

Docs: docs/cli/infer.md

Commands:
- infer: Write per-class probability maps for one scene
"""

from __future__ import annotations

from pathlib import Path

import click

from diffbev.cli.common import handle_errors
from diffbev.training.infer import infer as run_inference


@click.command()
@click.option("--ckpt", "checkpoint_path", type=click.Path(path_type=Path), required=True, help="Checkpoint file.")
@click.option("--scene", "scene_path", type=click.Path(path_type=Path), required=True, help="Scene archive (scene_<seed>.dbt).")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True, help="Directory for the PGM/PPM maps.")
def infer(checkpoint_path: Path, scene_path: Path, out_dir: Path) -> None:
    """Write one grayscale PGM per class and an argmax palette PPM."""
    with handle_errors():
        result = run_inference(checkpoint_path, scene_path, out_dir)
        for path in result.class_maps:
            click.echo(f"  {path}")
        click.echo(f"Composite: {result.composite}")
