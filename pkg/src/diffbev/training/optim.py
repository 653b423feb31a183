"""Optimizer and learning-rate schedule.

This module provides:
- AdamW: adaptive-moment optimizer with decoupled weight decay
- lr_at: linear warm-up followed by a single linear decay to zero
- clip_grad_norm: global gradient-norm clipping
"""

from __future__ import annotations

import math
from collections.abc import Iterable
from typing import Any

import numpy as np
import numpy.typing as npt

from diffbev.core.errors import ConfigError, NumericalError
from diffbev.nn.module import Parameter

BETAS = (0.9, 0.999)
EPS = 1e-8


def lr_at(iteration: int, lr: float, warmup_iters: int, iterations: int) -> float:
    """Learning rate of a zero-based iteration.

    Warm-up rises linearly and reaches `lr` at iteration `warmup_iters`;
    the rate then falls linearly to 0 at the final iteration.
    """
    if iteration < warmup_iters:
        return lr * (iteration + 1) / (warmup_iters + 1)
    decay_span = iterations - 1 - warmup_iters
    if decay_span <= 0:
        return lr
    return lr * max(0.0, 1.0 - (iteration - warmup_iters) / decay_span)


def clip_grad_norm(params: Iterable[Parameter], max_norm: float) -> float:
    """Rescale gradients in place so their global L2 norm is at most max_norm.

    Returns:
        The norm before clipping.

    Raises:
        NumericalError: If the norm is not finite.
    """
    params = list(params)
    grads = [p.grad for p in params if p.grad is not None]
    total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads))
    if not math.isfinite(total):
        raise NumericalError("gradient norm is not finite", component="grad_norm")
    if total > max_norm > 0:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = (p.grad * scale).astype(p.grad.dtype)
    return total


class AdamW:
    """Adam with weight decay applied directly to the parameters.

    Moments are kept per parameter name so they can be checkpointed next
    to the model state.

    Attributes:
        params: Named trainable parameters.
        weight_decay: Decoupled decay coefficient.
        step_count: Number of completed updates.
        m: First-moment estimates.
        v: Second-moment estimates.
    """

    def __init__(self, params: Iterable[tuple[str, Parameter]], weight_decay: float = 0.01) -> None:
        if weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {weight_decay}")
        self.params = dict(params)
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self, lr: float) -> None:
        self.step_count += 1
        beta1, beta2 = BETAS
        bias1 = 1.0 - beta1**self.step_count
        bias2 = 1.0 - beta2**self.step_count
        for name, p in self.params.items():
            dtype = p.data.dtype
            decayed = p.data - dtype.type(lr * self.weight_decay) * p.data
            if p.grad is None:
                p.data = decayed.astype(dtype)
                continue
            g = p.grad
            self.m[name] = (beta1 * self.m[name] + (1.0 - beta1) * g).astype(dtype)
            self.v[name] = (beta2 * self.v[name] + (1.0 - beta2) * g * g).astype(dtype)
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            p.data = (decayed - lr * m_hat / (np.sqrt(v_hat) + EPS)).astype(dtype)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def state_dict(self) -> dict[str, npt.NDArray[Any]]:
        """Moments under "m.<name>" / "v.<name>" plus the step counter."""
        state: dict[str, npt.NDArray[Any]] = {}
        for name in self.params:
            state[f"m.{name}"] = self.m[name].astype(np.float32)
            state[f"v.{name}"] = self.v[name].astype(np.float32)
        state["step"] = np.array([self.step_count], dtype=np.float32)
        return state

    def load_state_dict(self, state: dict[str, npt.NDArray[Any]]) -> None:
        """Restore moments saved by state_dict.

        Raises:
            ConfigError: If a parameter's moments are missing or misshapen.
        """
        for name, p in self.params.items():
            for moments, key in ((self.m, f"m.{name}"), (self.v, f"v.{name}")):
                if key not in state:
                    raise ConfigError(f"optimizer state is missing {key}")
                value = np.asarray(state[key], dtype=p.data.dtype)
                if value.shape != p.shape:
                    raise ConfigError(f"{key}: expected shape {p.shape}, got {value.shape}")
                moments[name] = value.copy()
        self.step_count = int(np.asarray(state.get("step", [0])).reshape(-1)[0])
