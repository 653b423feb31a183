"""Parameter containers.

This module provides:
- Parameter: a Tensor that always requires gradients
- Module: attribute-discovered parameter/buffer trees with state dicts
- uniform_init: fan-in scaled uniform initialization
"""

from __future__ import annotations

import math
from collections.abc import Iterator, Mapping
from typing import Any

import numpy as np
import numpy.typing as npt

from diffbev.core.errors import ConfigError
from diffbev.core.tensor import Tensor

KAIMING_GAIN = math.sqrt(6.0)


class Parameter(Tensor):
    """Trainable tensor."""

    def __init__(self, data: npt.ArrayLike) -> None:
        super().__init__(data, requires_grad=True)


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Parameter:
    """Draw U(-b, b) with b = KAIMING_GAIN / sqrt(fan_in)."""
    bound = KAIMING_GAIN / math.sqrt(max(fan_in, 1))
    return Parameter(rng.uniform(-bound, bound, size=shape))


class Module:
    """Base class for layers and models.

    Parameters, buffers and sub-modules are discovered from instance
    attributes in assignment order; lists of modules are indexed by
    position ("blocks.0.conv.weight").
    """

    training: bool = True

    def __init__(self) -> None:
        self._buffers: dict[str, Tensor] = {}
        self.training = True

    def register_buffer(self, name: str, value: npt.ArrayLike) -> Tensor:
        buffer = Tensor(value)
        self._buffers[name] = buffer
        setattr(self, name, buffer)
        return buffer

    def children(self) -> Iterator[tuple[str, Module]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, list | tuple):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, buffer in getattr(self, "_buffers", {}).items():
            yield prefix + name, buffer
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode: bool = True) -> Module:
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self) -> Module:
        return self.train(False)

    def state_dict(self, prefix: str = "") -> dict[str, npt.NDArray[Any]]:
        """Copy of every parameter and buffer, keyed by dotted name."""
        state = {name: p.data.copy() for name, p in self.named_parameters(prefix)}
        state.update({name: b.data.copy() for name, b in self.named_buffers(prefix)})
        return state

    def load_state_dict(self, state: Mapping[str, npt.ArrayLike], prefix: str = "", strict: bool = True) -> None:
        """Load values into parameters and buffers in place of their data.

        Raises:
            ConfigError: On missing/unexpected keys (strict) or shape mismatch.
        """
        targets: dict[str, Tensor] = dict(self.named_parameters(prefix))
        targets.update(self.named_buffers(prefix))
        if strict:
            own = {k for k in state if k.startswith(prefix)}
            missing = sorted(set(targets) - own)
            unexpected = sorted(own - set(targets))
            if missing or unexpected:
                raise ConfigError(f"state dict mismatch: missing={missing[:5]} unexpected={unexpected[:5]}")
        for name, tensor in targets.items():
            if name not in state:
                continue
            value = np.asarray(state[name], dtype=tensor.dtype)
            if value.shape != tensor.shape:
                raise ConfigError(f"{name}: expected shape {tensor.shape}, got {value.shape}")
            tensor.data = value.copy()
            tensor.grad = None

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError
