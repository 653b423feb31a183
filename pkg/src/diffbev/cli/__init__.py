"""Command-line interface for diffbev.

This module provides the main CLI entry point and assembles all commands.

Commands:
- generate: Write a synthetic dataset
- train: Train the model end to end
- eval: Evaluate a checkpoint on a dataset
- ablate: Run the condition/fusion/encoder ablation grid
- infer: Write probability maps for one scene
- gradcheck: Run the 64-bit gradient-check suite
"""

from __future__ import annotations

import logging
from pathlib import Path

import click

from diffbev.cli.ablate import ablate
from diffbev.cli.common import handle_errors, setup_logging
from diffbev.cli.evaluate import evaluate
from diffbev.cli.generate import generate
from diffbev.cli.gradcheck import gradcheck
from diffbev.cli.infer import infer
from diffbev.cli.train import train


@click.group()
@click.version_option(package_name="diffbev")
@click.option("--verbose", "-v", is_flag=True, help="Enable debug logging.")
@click.option("--log-file", type=click.Path(path_type=Path), default=None, help="Also write logs to this file.")
def cli(verbose: bool, log_file: Path | None) -> None:
    """diffbev - Conditional diffusion refinement of bird's-eye-view features."""
    setup_logging(logging.DEBUG if verbose else logging.INFO, log_file)


# Data commands
cli.add_command(generate)

# Training commands
cli.add_command(train)
cli.add_command(ablate)

# Evaluation commands
cli.add_command(evaluate)
cli.add_command(infer)
cli.add_command(gradcheck)


def main() -> None:
    """Entry point for the CLI."""
    cli()


__all__ = [
    # Main entry points
    "cli",
    "main",
    # Helpers
    "handle_errors",
    "setup_logging",
]
