"""Exception hierarchy for diffbev.

The CLI maps these onto exit codes: validation-type errors exit with 1,
numerical failures with 2.
"""

from __future__ import annotations


class DiffBEVError(Exception):
    """Base exception for diffbev errors."""


class ShapeError(DiffBEVError, ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class ConfigError(DiffBEVError, ValueError):
    """Invalid configuration value, unknown key, or inconsistent setup."""


class ArchiveError(DiffBEVError):
    """A tensor archive is malformed or holds unsupported data."""


class DatasetError(DiffBEVError):
    """Dataset directory is missing, empty, or disagrees with its manifest."""


class NumericalError(DiffBEVError):
    """A computation produced non-finite values or failed a gradient check.

    Attributes:
        component: Name of the offending quantity (e.g. "l_depth"), if known.
    """

    def __init__(self, message: str, component: str | None = None) -> None:
        self.component = component
        super().__init__(message)
