"""Shared helpers for diffbev CLI commands.

This module provides:
- setup_logging: package logger with stdout and optional file output
- handle_errors: map diffbev exceptions onto exit codes
- EXIT_VALIDATION / EXIT_NUMERICAL: the non-zero exit codes
"""

from __future__ import annotations

import contextlib
import logging
import sys
from collections.abc import Iterator
from pathlib import Path

import click

from diffbev.core.errors import ArchiveError, ConfigError, DatasetError, NumericalError, ShapeError

EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logging(level: int = logging.INFO, log_file: Path | None = None) -> None:
    """Configure the "diffbev" logger to write to stdout and optionally a file.

    Existing handlers are replaced so repeated invocations in one process
    do not duplicate output.

    Args:
        level: Logging level for the package logger.
        log_file: Optional file receiving the same records.
    """
    formatter = logging.Formatter(LOG_FORMAT)
    root_logger = logging.getLogger("diffbev")
    root_logger.setLevel(level)
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)
        handler.close()

    stdout_handler = logging.StreamHandler(sys.stdout)
    stdout_handler.setFormatter(formatter)
    root_logger.addHandler(stdout_handler)

    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(formatter)
        root_logger.addHandler(file_handler)


@contextlib.contextmanager
def handle_errors() -> Iterator[None]:
    """Echo diffbev errors and exit with 1 (validation) or 2 (numerical)."""
    try:
        yield
    except NumericalError as e:
        component = f" [{e.component}]" if e.component else ""
        click.echo(f"Error: {e}{component}", err=True)
        sys.exit(EXIT_NUMERICAL)
    except (ShapeError, ConfigError, ArchiveError, DatasetError) as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
