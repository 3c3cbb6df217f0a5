import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamstyle.errors import OrderingError
from hamstyle.pipeline import invert, sample
from hamstyle.scheduler import (CLEAN, LatentState, NoiseSchedule, add_noise, build_schedule, ddim_invert_step,
                                ddim_step)

from helpers import ROUND_TRIP_BOUND, round_trip_errors


def flat_schedule(a=0.5, T=10):
    """Degenerate schedule with one alpha-bar value everywhere."""
    betas = np.zeros(T)
    return NoiseSchedule(T, betas, np.full(T, a), 2, np.array([5, 0]))


class TestBuildSchedule:
    def test_defaults(self, schedule):
        assert schedule.T == 1000 and schedule.inference_steps == 50
        assert schedule.betas[0] == pytest.approx(8.5e-4) and schedule.betas[-1] == pytest.approx(0.012)
        assert len(schedule.step_indices) == 50
        assert schedule.step_indices[0] == 980 and schedule.step_indices[-1] == 0

    def test_monotone(self, schedule):
        a = schedule.alphas_cumprod
        assert np.all(a > 0) and np.all(a <= 1)
        assert np.all(np.diff(a) <= 0)
        assert np.all(np.diff(schedule.step_indices) < 0)

    def test_cumprod_oracle(self, schedule):
        prod = 1.0
        for t in range(0, 1000):
            prod *= 1.0 - float(schedule.betas[t])
            if t % 97 == 0:
                assert schedule.alphas_cumprod[t] == pytest.approx(prod, rel=1e-12)

    def test_single_step(self):
        s = build_schedule(T=1, inference_steps=1)
        assert s.step_indices.tolist() == [0]

    def test_constant_beta_closed_form(self):
        b = 0.01
        s = build_schedule(T=50, beta_start=b, beta_end=b, inference_steps=5)
        np.testing.assert_allclose(s.betas, b)
        np.testing.assert_allclose(s.alphas_cumprod, (1 - b) ** (np.arange(50) + 1), rtol=1e-12)

    @pytest.mark.parametrize("kwargs", [
        {"beta_start": 0.0}, {"beta_start": 0.02, "beta_end": 0.01}, {"beta_end": 1.0},
        {"inference_steps": 0}, {"inference_steps": 1001}, {"T": 0},
    ])
    def test_bad_bounds(self, kwargs):
        with pytest.raises(ValueError):
            build_schedule(**kwargs)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 400), st.integers(1, 400))
    def test_step_indices_valid(self, T, n):
        if n > T:
            n = T
        s = build_schedule(T=T, inference_steps=n)
        assert len(s.step_indices) == n
        assert np.all(np.diff(s.step_indices) < 0)
        assert 0 <= s.step_indices.min() and s.step_indices.max() < T


class TestDdim:
    def test_equal_alpha_is_identity(self, rng):
        s = flat_schedule()
        z = rng.standard_normal((3, 4, 4))
        out = ddim_step(s, LatentState(z, 5), rng.standard_normal(z.shape), 0)
        np.testing.assert_allclose(out.z, z, atol=1e-12)

    def test_zero_eps_to_clean(self, schedule, rng):
        z = rng.standard_normal((3, 4, 4))
        out = ddim_step(schedule, LatentState(z, 500), np.zeros_like(z), CLEAN)
        np.testing.assert_allclose(out.z, z / math.sqrt(schedule.alphas_cumprod[500]), rtol=1e-12)

    def test_zero_eps_inversion_rescales(self, schedule, rng):
        z = rng.standard_normal((3, 4, 4))
        out = ddim_invert_step(schedule, LatentState(z, 100), np.zeros_like(z), 300)
        a, b = schedule.alphas_cumprod[100], schedule.alphas_cumprod[300]
        np.testing.assert_allclose(out.z, z * math.sqrt(b / a), rtol=1e-12)

    def test_scalar_oracle(self, schedule, rng):
        z, eps = rng.standard_normal(6), rng.standard_normal(6)
        out = ddim_step(schedule, LatentState(z, 740), eps, 720).z
        a_t, a_n = float(schedule.alphas_cumprod[740]), float(schedule.alphas_cumprod[720])
        for zi, ei, oi in zip(z, eps, out):
            x0 = (zi - math.sqrt(1 - a_t) * ei) / math.sqrt(a_t)
            assert oi == pytest.approx(math.sqrt(a_n) * x0 + math.sqrt(1 - a_n) * ei, abs=1e-6)

    def test_invert_then_step_identity(self, schedule):
        rng = np.random.default_rng(0)
        pairs = [(CLEAN, 0), (0, 20), (480, 500), (960, 980)]
        for i in range(100):
            lo, hi = pairs[i % len(pairs)]
            z = rng.standard_normal((3, 8, 8)).astype(np.float32)
            eps = rng.standard_normal(z.shape).astype(np.float32)
            up = ddim_invert_step(schedule, LatentState(z, lo), eps, hi)
            back = ddim_step(schedule, up, eps, lo)
            np.testing.assert_allclose(back.z, z, atol=1e-5)
            down = ddim_step(schedule, LatentState(z, hi), eps, lo)
            again = ddim_invert_step(schedule, down, eps, hi)
            np.testing.assert_allclose(again.z, z, atol=1e-5)

    def test_ordering(self, schedule):
        z = np.zeros((1, 2))
        with pytest.raises(OrderingError):
            ddim_step(schedule, LatentState(z, 10), z, 10)
        with pytest.raises(OrderingError):
            ddim_invert_step(schedule, LatentState(z, 10), z, 5)

    def test_non_finite_state(self):
        with pytest.raises(FloatingPointError):
            LatentState(np.array([np.nan]), 0)

    def test_preserves_dtype(self, schedule):
        z = np.ones((2, 2), np.float32)
        assert ddim_step(schedule, LatentState(z, 20), z, 0).z.dtype == np.float32

    def test_add_noise_matches_formula(self, schedule, rng):
        z0, eps = rng.standard_normal((2, 3, 4, 4)), rng.standard_normal((2, 3, 4, 4))
        out = add_noise(schedule, z0, eps, np.array([0, 999]))
        a = schedule.alphas_cumprod[999]
        np.testing.assert_allclose(out[1], math.sqrt(a) * z0[1] + math.sqrt(1 - a) * eps[1])


class TestTrajectories:
    def test_untrained_round_trip_exact(self, schedule, rng):
        from hamstyle.denoiser import Denoiser, DenoiserConfig

        model = Denoiser.initialize(DenoiserConfig(), seed=0)
        z0 = rng.uniform(-1, 1, (3, 32, 32)).astype(np.float32)
        rec = sample(model, schedule, invert(model, schedule, z0))
        np.testing.assert_allclose(rec, z0, atol=1e-5)

    def test_round_trip_regression(self, trained_model, schedule, pairs):
        errors = round_trip_errors(trained_model, schedule, [c for c, _, _ in pairs])
        assert max(errors) < ROUND_TRIP_BOUND, errors

    def test_deterministic(self, trained_model, schedule, rng):
        z_T = rng.standard_normal((3, 32, 32)).astype(np.float32)
        a = sample(trained_model, schedule, z_T, 2)
        b = sample(trained_model, schedule, z_T, 2)
        assert a.tobytes() == b.tobytes()
