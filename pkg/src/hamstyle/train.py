"""Adam training of the denoiser on the epsilon-prediction objective."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .denoiser import NULL_CONDITION, Denoiser, DenoiserConfig, init_params, mse_loss_and_grads
from .errors import TrainingDivergenceError
from .scheduler import NoiseSchedule, add_noise, build_schedule

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    model: Denoiser
    losses: List[float]


class Adam:
    def __init__(self, params, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.step_count = 0

    def step(self, params, grads):
        self.step_count += 1
        c1 = 1.0 - self.b1**self.step_count
        c2 = 1.0 - self.b2**self.step_count
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def train(dataset, steps: int, lr: float = 1e-3, seed: int = 0,
          config: DenoiserConfig = DenoiserConfig(), schedule: Optional[NoiseSchedule] = None,
          batch_size: int = 16, cond_dropout: float = 0.3, dtype=np.float32,
          log_every: int = 0) -> TrainResult:
    """Fit ``eps_theta`` by minimising ``|eps - eps_theta(z_t, t, c)|^2`` at uniform ``t``.

    ``dataset.sample(rng, n)`` must return ``(latents, condition_ids)`` with latents
    in ``[-1, 1]``.  A ``cond_dropout`` fraction of each batch is trained under the
    null condition so inversion with the null condition is meaningful.  Training
    runs in ``dtype``; the returned model holds float32 weights.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if lr <= 0:
        raise ValueError("lr must be positive")
    schedule = schedule or build_schedule()
    rng = np.random.default_rng(seed)
    model = Denoiser(config, init_params(config, seed, dtype=dtype))
    opt = Adam(model.params, lr)
    losses = []
    for step in range(steps):
        z0, cond = dataset.sample(rng, batch_size)
        cond = np.where(rng.random(batch_size) < cond_dropout, NULL_CONDITION, cond)
        t = rng.integers(0, schedule.T, batch_size)
        eps = rng.standard_normal(z0.shape)
        z_t = add_noise(schedule, z0, eps, t).astype(dtype)
        eps = eps.astype(dtype)
        loss, grads = mse_loss_and_grads(model, z_t, t, cond, eps)
        if not np.isfinite(loss):
            raise TrainingDivergenceError("training loss became non-finite", step)
        opt.step(model.params, grads)
        losses.append(loss)
        if log_every and (step + 1) % log_every == 0:
            log.info("step %d loss %.5f", step + 1, loss)
    return TrainResult(model.astype(np.float32), losses)
