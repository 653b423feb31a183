"""Gradient-check command for diffbev CLI.

Docs: docs/cli/gradcheck.md

Commands:
- gradcheck: Run the 64-bit finite-difference suite
"""

from __future__ import annotations

import sys
import time

import click

from diffbev.cli.common import EXIT_NUMERICAL, handle_errors
from diffbev.training.gradsuite import run_gradsuite


@click.command()
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for inputs and sampled entries.")
@click.option("--only", default=None, help="Run only checks whose name contains this text.")
def gradcheck(seed: int, only: str | None) -> None:
    """Compare every analytic gradient with central finite differences.

    Exits with status 2 if any check exceeds the relative-error tolerance.
    """
    with handle_errors():
        start = time.perf_counter()
        reports = run_gradsuite(seed=seed, only=only)
        for report in reports:
            click.echo(report.summary())
        failed = [r for r in reports if not r.passed]
        elapsed = time.perf_counter() - start
        if not reports:
            click.echo(f"Error: no gradient check matches {only!r}", err=True)
            sys.exit(1)
        if failed:
            click.echo(f"Error: {len(failed)} of {len(reports)} checks failed ({elapsed:.1f}s)", err=True)
            sys.exit(EXIT_NUMERICAL)
        click.echo(f"All {len(reports)} checks passed ({elapsed:.1f}s)")
