"""Linear-beta noise schedule with deterministic (eta = 0) DDIM stepping and inversion.

Timestep ``-1`` denotes the clean latent, for which the cumulative alpha is 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OrderingError

CLEAN = -1


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    betas: np.ndarray = field(repr=False)
    alphas_cumprod: np.ndarray = field(repr=False)
    inference_steps: int
    step_indices: np.ndarray
    beta_start: float = 0.0
    beta_end: float = 0.0

    def alpha_bar(self, t: int) -> float:
        if t == CLEAN:
            return 1.0
        if not 0 <= t < self.T:
            raise ValueError(f"timestep {t} outside [0, {self.T})")
        return float(self.alphas_cumprod[t])

    def next_lower(self, ordinal: int) -> int:
        """Timestep reached after sampling step ``ordinal`` (``CLEAN`` after the last)."""
        return int(self.step_indices[ordinal + 1]) if ordinal + 1 < self.inference_steps else CLEAN


@dataclass(frozen=True)
class LatentState:
    z: np.ndarray
    t: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.z)):
            raise FloatingPointError(f"latent at timestep {self.t} is not finite")


def build_schedule(T: int = 1000, beta_start: float = 8.5e-4, beta_end: float = 0.012,
                   inference_steps: int = 50) -> NoiseSchedule:
    if T < 1:
        raise ValueError("T must be at least 1")
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    if not 1 <= inference_steps <= T:
        raise ValueError(f"inference_steps must be in [1, {T}], got {inference_steps}")
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas_cumprod = np.cumprod(1.0 - betas)
    stride = T // inference_steps
    step_indices = np.unique(np.arange(inference_steps) * stride)[::-1].copy()
    return NoiseSchedule(T, betas, alphas_cumprod, inference_steps, step_indices, beta_start, beta_end)


def _transfer(z, eps, a_from: float, a_to: float):
    # x0 = (z - sqrt(1 - a_from) eps) / sqrt(a_from); z' = sqrt(a_to) x0 + sqrt(1 - a_to) eps
    dtype = z.dtype
    x0 = (z - np.sqrt(1.0 - a_from) * eps) / np.sqrt(a_from)
    return (np.sqrt(a_to) * x0 + np.sqrt(1.0 - a_to) * eps).astype(dtype, copy=False)


def ddim_step(schedule: NoiseSchedule, state: LatentState, eps_pred, next_t: int) -> LatentState:
    """One deterministic DDIM denoising step from ``state.t`` down to ``next_t``."""
    if next_t >= state.t:
        raise OrderingError(f"ddim_step needs next_t < t, got {next_t} >= {state.t}")
    a_t, a_next = schedule.alpha_bar(state.t), schedule.alpha_bar(next_t)
    return LatentState(_transfer(state.z, eps_pred, a_t, a_next), next_t)


def ddim_invert_step(schedule: NoiseSchedule, state: LatentState, eps_pred, next_t: int) -> LatentState:
    """Reversed DDIM step from ``state.t`` up to ``next_t`` (exact inverse of :func:`ddim_step` for fixed eps)."""
    if next_t <= state.t:
        raise OrderingError(f"ddim_invert_step needs next_t > t, got {next_t} <= {state.t}")
    a_t, a_next = schedule.alpha_bar(state.t), schedule.alpha_bar(next_t)
    return LatentState(_transfer(state.z, eps_pred, a_t, a_next), next_t)


def add_noise(schedule: NoiseSchedule, z0, eps, t):
    """Forward diffusion ``sqrt(a_t) z0 + sqrt(1 - a_t) eps`` for a batch of timesteps."""
    a = schedule.alphas_cumprod[np.asarray(t)].reshape(-1, *([1] * (z0.ndim - 1)))
    return np.sqrt(a) * z0 + np.sqrt(1.0 - a) * eps
