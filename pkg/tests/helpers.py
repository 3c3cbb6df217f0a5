"""Shared oracles and fixtures for the test suite.

Run ``python3 tests/helpers.py`` to regenerate the golden prediction fixture.
"""

from pathlib import Path

import numpy as np

from hamstyle.data import ToyDataset
from hamstyle.denoiser import Denoiser, DenoiserConfig, init_params, mse_loss_and_grads
from hamstyle.scheduler import build_schedule
from hamstyle.tensor import save_hamt
from hamstyle.train import train

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = FIXTURES / "golden_predict.hamt"

# miniature denoiser for gradient checks and loss-trend runs
MINI = DenoiserConfig(latent_size=8, width=8, num_blocks=1, heads=1, context_tokens=2, context_dim=8,
                      patch_size=4, norm_groups=2)


# mean per-pixel L2 error of a 50-step invert -> sample round trip on the shared toy
# model (400 steps, seed 0); measured 0.055..0.068 over the ten fixture contents
ROUND_TRIP_BOUND = 0.075


def round_trip_errors(model, schedule, images):
    """Per-image mean over pixels of the channel-wise L2 distance after invert -> sample."""
    from hamstyle.pipeline import invert, sample

    errors = []
    for z0 in images:
        rec = sample(model, schedule, invert(model, schedule, z0))
        errors.append(float(np.mean(np.sqrt(np.sum((rec - z0) ** 2, axis=0)))))
    return errors


def directional_outcomes(model, schedule, pairs):
    """Per pair: (stylized distance, unmodulated distance) to the style teacher's reconstruction."""
    from hamstyle.metrics import channel_stat_distance
    from hamstyle.modulation import ModulationConfig
    from hamstyle.pipeline import TransferRequest, prepare_teachers, transfer

    out = []
    for content, style, _ in pairs:
        req = TransferRequest(content, style, model, ModulationConfig(), schedule)
        teachers = prepare_teachers(req)
        target = teachers.style.latents[-1]
        stylized = transfer(req, teachers).stylized_latent
        plain = teachers.content.latents[-1]
        out.append((channel_stat_distance(stylized, target), channel_stat_distance(plain, target)))
    return out


def golden_inputs():
    model = Denoiser.initialize(DenoiserConfig(), seed=7, zero_init_out=False)
    z = np.random.default_rng(7).standard_normal(model.config.latent_shape).astype(np.float32)
    return model, z, 500, 2


def golden_prediction():
    model, z, t, c = golden_inputs()
    return model.predict_noise(z, t, c)


def gradient_check(n_params=24, seed=0, h=1e-3):
    """Analytic vs central finite-difference gradients at random scalar weights.

    Returns a list of ``(name, index, analytic, numeric)``.  The output layer is
    not zero-initialised so every parameter carries gradient.
    """
    rng = np.random.default_rng(seed)
    model = Denoiser(MINI, init_params(MINI, seed, zero_init_out=False, dtype=np.float64))
    schedule = build_schedule()
    z0, cond = ToyDataset(MINI.latent_size).sample(rng, 3)
    t = rng.integers(0, schedule.T, 3)
    eps = rng.standard_normal(z0.shape)
    a = np.sqrt(schedule.alphas_cumprod[t])[:, None, None, None]
    z_t = a * z0 + np.sqrt(1 - a**2) * eps
    _, grads = mse_loss_and_grads(model, z_t, t, cond, eps)

    names = sorted(model.params)
    out = []
    for _ in range(n_params):
        name = names[rng.integers(len(names))]
        p = model.params[name]
        idx = tuple(int(rng.integers(s)) for s in p.shape)
        old = p[idx]
        p[idx] = old + h
        up, _ = mse_loss_and_grads(model, z_t, t, cond, eps)
        p[idx] = old - h
        down, _ = mse_loss_and_grads(model, z_t, t, cond, eps)
        p[idx] = old
        out.append((name, idx, float(grads[name][idx]), (up - down) / (2 * h)))
    return out


def relative_error(analytic, numeric):
    scale = max(abs(analytic), abs(numeric))
    return 0.0 if scale == 0 else abs(analytic - numeric) / scale


def loss_trend(seed, steps=120):
    """(mean of first 10% of losses, mean of last 10%) for a miniature training run."""
    result = train(ToyDataset(MINI.latent_size), steps, lr=3e-3, seed=seed, config=MINI, batch_size=8)
    k = max(1, steps // 10)
    return float(np.mean(result.losses[:k])), float(np.mean(result.losses[-k:]))


if __name__ == "__main__":
    save_hamt(GOLDEN, golden_prediction())
    print(f"wrote {GOLDEN}")
