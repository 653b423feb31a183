"""Finite-difference gradient checking in 64-bit shadow mode.

This module provides:
- gradcheck: compare tape gradients with central differences
- float64_shadow: temporarily run a set of tensors in float64
- GradcheckReport / GradcheckFailure: results of one check
"""

from __future__ import annotations

import contextlib
import logging
from collections.abc import Callable, Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from diffbev.core.tensor import Tape, Tensor, no_grad, precision

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-3
STEP_SCALE = 1e-4
ERROR_FLOOR = 1e-2


@dataclass
class GradcheckFailure:
    """One parameter entry whose analytic gradient disagrees."""

    name: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradcheckReport:
    """Outcome of a gradient check.

    Attributes:
        name: Label of the checked computation.
        max_rel_error: Largest relative error over the checked entries.
        checked: Number of entries compared.
        tolerance: Relative error above which an entry fails.
        floor: Smallest denominator of the relative error; gradients below
            it in magnitude are held to an absolute error of tolerance·floor.
        failures: Entries above tolerance.
    """

    name: str
    max_rel_error: float = 0.0
    checked: int = 0
    tolerance: float = DEFAULT_TOLERANCE
    floor: float = ERROR_FLOOR
    failures: list[GradcheckFailure] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.checked > 0 and not self.failures

    def summary(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return f"{status:4} {self.name}: max_rel_err={self.max_rel_error:.3e} over {self.checked} entries (floor {self.floor:.0e})"


def relative_error(analytic: float, numeric: float, floor: float = ERROR_FLOOR) -> float:
    """|a − n| / max(|a|, |n|, floor); the floor keeps near-zero gradients from dominating."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


@contextlib.contextmanager
def float64_shadow(tensors: Iterable[Tensor]) -> Iterator[None]:
    """Swap each tensor's data for a float64 copy and restore it on exit.

    Gradients produced inside the block are discarded on exit.
    """
    items = list(tensors)
    originals = [t.data for t in items]
    for t in items:
        t.data = t.data.astype(np.float64)
        t.grad = None
    try:
        with precision(np.float64):
            yield
    finally:
        for t, original in zip(items, originals, strict=True):
            t.data = original
            t.grad = None


def _named(params: Mapping[str, Tensor] | Sequence[Tensor]) -> list[tuple[str, Tensor]]:
    if isinstance(params, Mapping):
        return list(params.items())
    return [(f"param{i}", p) for i, p in enumerate(params)]


def gradcheck(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor] | Sequence[Tensor],
    name: str = "gradcheck",
    tolerance: float = DEFAULT_TOLERANCE,
    fraction: float = 1.0,
    rng: np.random.Generator | None = None,
    shadow: Iterable[Tensor] = (),
    floor: float = ERROR_FLOOR,
) -> GradcheckReport:
    """Check the gradient of a scalar computation against central differences.

    The step for entry x is h = 1e-4·max(1, |x|). The computation must be
    deterministic: it is re-evaluated twice per checked entry.

    Args:
        f: Zero-argument callable returning a scalar Tensor.
        params: Tensors (optionally named) whose gradients are checked.
        name: Label for the report.
        tolerance: Maximum accepted relative error.
        fraction: Share of entries to check per tensor (at least one each).
        rng: Generator used when fraction < 1.
        shadow: Extra tensors (constants, buffers) to run in float64.
        floor: Denominator floor of the relative error.

    Returns:
        GradcheckReport for the checked entries.
    """
    named = _named(params)
    report = GradcheckReport(name=name, tolerance=tolerance, floor=floor)
    rng = rng if rng is not None else np.random.default_rng(0)
    tensors = [t for _, t in named]
    extra = [t for t in shadow if all(t is not p for p in tensors)]

    flags = [t.requires_grad for t in tensors]
    with float64_shadow([*tensors, *extra]):
        for t in tensors:
            t.requires_grad = True
        with Tape() as tape:
            loss = f()
            tape.backward(loss)
        analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors]

        with no_grad():
            for (label, t), grad in zip(named, analytic, strict=True):
                flat = t.data.reshape(-1)
                count = flat.size
                if fraction < 1.0:
                    picks = rng.choice(count, size=max(1, int(round(count * fraction))), replace=False)
                else:
                    picks = np.arange(count)
                for flat_index in np.sort(picks):
                    x = float(flat[flat_index])
                    h = STEP_SCALE * max(1.0, abs(x))
                    flat[flat_index] = x + h
                    f_plus = f().item()
                    flat[flat_index] = x - h
                    f_minus = f().item()
                    flat[flat_index] = x
                    numeric = (f_plus - f_minus) / (2.0 * h)
                    a = float(grad.reshape(-1)[flat_index])
                    err = relative_error(a, numeric, floor)
                    report.checked += 1
                    report.max_rel_error = max(report.max_rel_error, err)
                    if err > tolerance:
                        index = tuple(int(i) for i in np.unravel_index(flat_index, t.shape))
                        report.failures.append(GradcheckFailure(label, index, a, numeric, err))

    for t, flag in zip(tensors, flags, strict=True):
        t.requires_grad = flag

    logger.debug(report.summary())
    return report
