import dataclasses

import numpy as np
import pytest

from hamstyle.modulation import ModulationConfig
from hamstyle.pipeline import (ABLATION_ROWS, TransferRequest, ablation_matrix, image_to_latent, invert,
                               invert_image, latent_to_image, prepare_teachers, reconstruct, save_png, load_image,
                               transfer)
from hamstyle.scheduler import build_schedule
from hamstyle.errors import ConfigError, NumericError
from hamstyle.denoiser import DenoiserConfig

from helpers import ROUND_TRIP_BOUND, directional_outcomes

OFF = (False, False, False)


@pytest.fixture(scope="module")
def short_schedule():
    return build_schedule(inference_steps=10)


@pytest.fixture(scope="module")
def pair(pairs):
    return pairs[1]


def request(model, schedule, content, style, **mod):
    return TransferRequest(content, style, model, ModulationConfig(**mod), schedule)


class TestImages:
    def test_latent_round_trip(self, pairs):
        z = pairs[0][0]
        img = latent_to_image(z)
        assert img.dtype == np.uint8 and img.shape == (32, 32, 3)
        np.testing.assert_allclose(image_to_latent(img), z, atol=1 / 127.5)

    def test_clamps(self):
        img = latent_to_image(np.full((3, 2, 2), 5.0))
        assert np.all(img == 255)
        assert np.all(latent_to_image(np.full((3, 2, 2), -5.0)) == 0)

    def test_non_finite_rejected(self):
        with pytest.raises(NumericError):
            latent_to_image(np.full((3, 2, 2), np.nan))

    def test_resize(self):
        z = image_to_latent(np.zeros((64, 48, 3), np.uint8))
        assert z.shape == (3, 32, 32)
        np.testing.assert_array_equal(z, -1.0)

    def test_png_round_trip(self, tmp_path, pairs):
        img = latent_to_image(pairs[0][0])
        save_png(tmp_path / "a.png", img)
        np.testing.assert_array_equal(load_image(tmp_path / "a.png"), img)

    def test_bad_image_shape(self):
        with pytest.raises(ValueError):
            image_to_latent(np.zeros((4, 4)))


class TestInversion:
    def test_zero_step_schedule_rejected(self, trained_model, pair):
        with pytest.raises(ValueError):
            build_schedule(inference_steps=0)
        s = build_schedule(inference_steps=1)
        empty = dataclasses.replace(s, inference_steps=0, step_indices=s.step_indices[:0])
        with pytest.raises(ValueError):
            invert(trained_model, empty, pair[0])

    def test_reconstruction_within_bound(self, trained_model, schedule, pair):
        z0 = pair[0]
        rec = reconstruct(z0, schedule, trained_model)
        assert np.mean(np.sqrt(np.sum((rec - z0) ** 2, axis=0))) < ROUND_TRIP_BOUND

    def test_deterministic(self, trained_model, short_schedule, pair):
        a, ta = invert_image(pair[0], short_schedule, trained_model)
        b, tb = invert_image(pair[0], short_schedule, trained_model)
        assert a.tobytes() == b.tobytes()
        assert ta.latents[-1].tobytes() == tb.latents[-1].tobytes()

    def test_trace_ends_at_reconstruction(self, trained_model, short_schedule, pair):
        _, trace = invert_image(pair[0], short_schedule, trained_model)
        assert np.array_equal(trace.latents[-1], reconstruct(pair[0], short_schedule, trained_model))

    def test_accepts_uint8_images(self, trained_model, short_schedule, pair):
        img = latent_to_image(pair[0])
        z_T, _ = invert_image(img, short_schedule, trained_model)
        assert z_T.shape == (3, 32, 32) and z_T.dtype == np.float32


class TestTransfer:
    def test_all_off_same_image_is_reconstruction(self, trained_model, short_schedule, pair):
        content = pair[0]
        out = transfer(request(trained_model, short_schedule, content, content,
                               gar_enabled=False, lat_enabled=False, sini_enabled=False))
        rec = reconstruct(content, short_schedule, trained_model)
        assert np.array_equal(out.stylized_latent, rec)
        assert np.array_equal(out.stylized_image, latent_to_image(rec))

    def test_chained_boundaries_are_reconstruction(self, trained_model, short_schedule, pair):
        content, style, _ = pair
        out = transfer(request(trained_model, short_schedule, content, style, gamma=1.0, alpha=1.0, lat_enabled=False))
        assert np.array_equal(out.stylized_latent, reconstruct(content, short_schedule, trained_model))
        assert np.array_equal(out.z_T_main, out.z_T_content)

    def test_sini_off_starts_from_content_noise(self, trained_model, short_schedule, pair):
        out = transfer(request(trained_model, short_schedule, pair[0], pair[1], sini_enabled=False))
        assert np.array_equal(out.z_T_main, out.z_T_content)

    def test_output_range(self, trained_model, short_schedule, pair):
        out = transfer(request(trained_model, short_schedule, pair[0], pair[1]))
        assert out.stylized_image.dtype == np.uint8
        assert np.all(np.isfinite(out.stylized_latent))

    def test_keep_latents(self, trained_model, short_schedule, pair):
        req = request(trained_model, short_schedule, pair[0], pair[1])
        req.keep_latents = True
        out = transfer(req)
        assert len(out.latents) == short_schedule.inference_steps
        assert np.array_equal(out.latents[-1], out.stylized_latent)

    def test_deterministic(self, trained_model, short_schedule, pair):
        a = transfer(request(trained_model, short_schedule, pair[0], pair[1]))
        b = transfer(request(trained_model, short_schedule, pair[0], pair[1]))
        assert a.stylized_image.tobytes() == b.stylized_image.tobytes()

    def test_checkpoint_path(self, trained_model, short_schedule, pair, tmp_path):
        trained_model.save(tmp_path)
        a = transfer(request(tmp_path, short_schedule, pair[0], pair[1]))
        b = transfer(request(trained_model, short_schedule, pair[0], pair[1]))
        assert np.array_equal(a.stylized_latent, b.stylized_latent)

    def test_text_guided(self, trained_model, short_schedule, pair):
        req = request(trained_model, short_schedule, pair[0], 2)
        assert req.text_guided
        a = transfer(req)
        b = transfer(dataclasses.replace(req, seed=1))
        assert a.z_T_style.shape == (3, 32, 32)
        assert not np.array_equal(a.z_T_style, b.z_T_style)
        assert np.array_equal(a.z_T_content, b.z_T_content)

    def test_default_moves_toward_style(self, trained_model, schedule, pairs):
        stylized, plain = directional_outcomes(trained_model, schedule, [pairs[2]])[0]
        assert stylized < plain


@pytest.fixture(scope="module")
def matrix(trained_model, short_schedule, pairs):
    req = request(trained_model, short_schedule, pairs[0][0], pairs[0][1])
    teachers = prepare_teachers(req)
    return req, teachers, ablation_matrix(req, tuple(ABLATION_ROWS.values()), teachers)


class TestAblation:
    def test_rows_in_order(self):
        assert list(ABLATION_ROWS) == list("ABCDEFGH")
        assert ABLATION_ROWS["A"] == OFF and ABLATION_ROWS["H"] == (True, True, True)

    def test_a_and_h_differ(self, matrix):
        _, _, results = matrix
        assert np.max(np.abs(results[0].stylized_latent - results[7].stylized_latent)) > 1e-3

    def test_matches_independent_transfers(self, matrix):
        req, _, results = matrix
        for row, res in zip(ABLATION_ROWS.values(), results):
            solo = transfer(dataclasses.replace(req, mod_config=req.mod_config.toggled(*row)))
            assert np.array_equal(solo.stylized_latent, res.stylized_latent)

    def test_duplicate_rows(self, matrix):
        req, teachers, _ = matrix
        a, b = ablation_matrix(req, [(True, False, True), (True, False, True)], teachers)
        assert a.stylized_latent.tobytes() == b.stylized_latent.tobytes()

    def test_teacher_reuse_matches_recompute(self, matrix):
        req, teachers, _ = matrix
        fresh = prepare_teachers(req)
        assert np.array_equal(fresh.z_T_content, teachers.z_T_content)
        for key, p in teachers.style.projections.items():
            for x, y in zip(p.astuple(), fresh.style.projections[key].astuple()):
                assert np.array_equal(x, y)

    def test_checkpoint_mismatch(self, tmp_path, trained_model, short_schedule, pair):
        from hamstyle.denoiser import Denoiser

        trained_model.save(tmp_path)
        with pytest.raises(ConfigError):
            Denoiser.load(tmp_path, expected_config=DenoiserConfig(width=32))
