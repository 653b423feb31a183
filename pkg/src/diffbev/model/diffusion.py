"""Noise schedule and the forward/reverse diffusion chain.

Timesteps are 1-based (t = 1..T); alpha_bar at t = 0 is defined as 1.

This module provides:
- NoiseSchedule, make_schedule: β, α, ᾱ sequences
- q_step / forward_sample: one-step and closed-form noising
- reverse_step / predict_x0: ancestral step with fixed posterior variance
- sample_timesteps / refine: strided reverse chain from pure noise
"""

from __future__ import annotations

import contextlib
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from diffbev.core.errors import ConfigError, ShapeError
from diffbev.core.tensor import Tensor, TensorLike, as_tensor, no_grad

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
DenoiseFn = Callable[[Tensor, int, Tensor], Tensor]


@dataclass(frozen=True)
class NoiseSchedule:
    """β_t, α_t = 1 − β_t and ᾱ_t = ∏_{s≤t} α_s for t = 1..T (float64)."""

    beta: FloatArray
    alpha: FloatArray
    alpha_bar: FloatArray

    @classmethod
    def from_betas(cls, betas: Sequence[float] | FloatArray) -> NoiseSchedule:
        """Build a schedule from explicit variances (0 <= β < 1).

        Zero variances are accepted so the noiseless limit can be expressed.
        """
        beta = np.asarray(betas, dtype=np.float64).reshape(-1)
        if beta.size == 0 or (beta < 0).any() or (beta >= 1).any():
            raise ConfigError(f"betas must be non-empty and in [0, 1), got {beta.tolist()}")
        alpha = 1.0 - beta
        return cls(beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha))

    @property
    def T(self) -> int:  # noqa: N802
        return int(self.beta.shape[0])

    def check_t(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ConfigError(f"timestep {t} outside [1, {self.T}]")

    def alpha_bar_at(self, t: int) -> float:
        """ᾱ_t with ᾱ_0 = 1."""
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    def posterior_variance(self, t: int) -> float:
        """β̃_t = β_t·(1 − ᾱ_{t−1})/(1 − ᾱ_t), zero when 1 − ᾱ_t = 0."""
        self.check_t(t)
        denom = 1.0 - self.alpha_bar_at(t)
        if denom <= 0.0:
            return 0.0
        return float(self.beta[t - 1]) * (1.0 - self.alpha_bar_at(t - 1)) / denom

    def strided(self, timesteps: Sequence[int]) -> NoiseSchedule:
        """Effective schedule visiting only the given ascending timesteps.

        The k-th step keeps ᾱ of the k-th visited timestep, and its variance is
        β'_k = 1 − ᾱ'_k/ᾱ'_{k−1}.
        """
        ts = [int(t) for t in timesteps]
        for t in ts:
            self.check_t(t)
        if any(b <= a for a, b in zip(ts, ts[1:], strict=False)):
            raise ConfigError(f"strided timesteps must be strictly increasing, got {ts}")
        alpha_bar = self.alpha_bar[np.asarray(ts) - 1]
        previous = np.concatenate([[1.0], alpha_bar[:-1]])
        alpha = alpha_bar / previous
        return NoiseSchedule(beta=1.0 - alpha, alpha=alpha, alpha_bar=alpha_bar)


def make_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:  # noqa: N803
    """Linear β schedule from beta_start to beta_end inclusive.

    Raises:
        ConfigError: Unless T >= 1 and 0 < beta_start <= beta_end < 1.
    """
    if T < 1 or not 0 < beta_start <= beta_end < 1:
        raise ConfigError(f"invalid schedule T={T}, beta_start={beta_start}, beta_end={beta_end}")
    return NoiseSchedule.from_betas(np.linspace(beta_start, beta_end, T))


def q_step(x_prev: Tensor, t: int, sched: NoiseSchedule, noise: TensorLike) -> Tensor:
    """x_t = √(1 − β_t)·x_{t−1} + √β_t·noise."""
    sched.check_t(t)
    beta = float(sched.beta[t - 1])
    return x_prev * math.sqrt(1.0 - beta) + as_tensor(noise) * math.sqrt(beta)


def forward_sample(x0: Tensor, t: int, sched: NoiseSchedule, eps: TensorLike) -> Tensor:
    """x_t = √ᾱ_t·x_0 + √(1 − ᾱ_t)·ε, differentiable w.r.t. x_0.

    Raises:
        ShapeError: If eps does not match x_0.
        ConfigError: If t is out of range.
    """
    sched.check_t(t)
    eps_t = as_tensor(eps)
    if eps_t.shape != x0.shape:
        raise ShapeError(f"noise shape {eps_t.shape} != sample shape {x0.shape}")
    a_bar = sched.alpha_bar_at(t)
    return x0 * math.sqrt(a_bar) + eps_t * math.sqrt(1.0 - a_bar)


def predict_x0(x_t: Tensor, t: int, sched: NoiseSchedule, eps: TensorLike) -> Tensor:
    """One-step estimate x̂_0 = (x_t − √(1 − ᾱ_t)·ε)/√ᾱ_t."""
    sched.check_t(t)
    a_bar = sched.alpha_bar_at(t)
    return (x_t - as_tensor(eps) * math.sqrt(1.0 - a_bar)) * (1.0 / math.sqrt(a_bar))


def reverse_step(x_t: Tensor, t: int, eps_hat: Tensor, sched: NoiseSchedule, noise: TensorLike | None) -> Tensor:
    """Ancestral step x_{t−1} = μ_θ + √β̃_t·noise, noise dropped at t = 1.

    μ_θ = (1/√α_t)·(x_t − β_t/√(1 − ᾱ_t)·ε̂).
    """
    sched.check_t(t)
    beta = float(sched.beta[t - 1])
    alpha = float(sched.alpha[t - 1])
    one_minus = 1.0 - sched.alpha_bar_at(t)
    eps_coef = beta / math.sqrt(one_minus) if one_minus > 0.0 else 0.0
    mean = (x_t - eps_hat * eps_coef) * (1.0 / math.sqrt(alpha))
    variance = sched.posterior_variance(t)
    if t == 1 or noise is None or variance == 0.0:
        return mean
    return mean + as_tensor(noise) * math.sqrt(variance)


def sample_timesteps(T: int, n_steps: int) -> list[int]:  # noqa: N803
    """Evenly spaced ascending timesteps in [1, T], always including 1 (and T when n_steps > 1)."""
    if not 1 <= n_steps <= T:
        raise ConfigError(f"n_steps must be in [1, {T}], got {n_steps}")
    return sorted({int(t) for t in np.round(np.linspace(1, T, n_steps))})


def refine(
    x_cond: Tensor,
    model: DenoiseFn,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    n_steps: int,
    grad_steps: int | None = None,
) -> Tensor:
    """Run the strided reverse chain from x_T ~ N(0, I) to an x_0 estimate.

    The denoiser sees the original timestep; the update uses the strided
    schedule's coefficients. Only the last grad_steps steps are recorded
    for backpropagation (all of them when None); the values do not depend
    on it.

    Args:
        x_cond: Condition, which also fixes the sample shape.
        model: Callable (x_t, t, x_cond) -> ε̂.
        sched: Full schedule.
        rng: Source of the initial sample and per-step noise.
        n_steps: Number of reverse steps (<= T).
        grad_steps: Trailing steps that carry gradients.
    """
    timesteps = sample_timesteps(sched.T, n_steps)
    chain = sched if len(timesteps) == sched.T else sched.strided(timesteps)
    recorded = len(timesteps) if grad_steps is None else grad_steps
    x = Tensor(rng.standard_normal(x_cond.shape))
    for k in range(len(timesteps), 0, -1):
        with no_grad() if k > recorded else contextlib.nullcontext():
            eps_hat = model(x, timesteps[k - 1], x_cond)
            noise = rng.standard_normal(x_cond.shape) if k > 1 else None
            x = reverse_step(x, k, eps_hat, chain, noise)
    return x
