"""End-to-end style transfer: invert, build teacher traces, initialise, run the modulated student."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from .denoiser import NULL_CONDITION, Denoiser
from .errors import NumericError
from .modulation import ModulationConfig, TeacherTrace, TraceRecorder, make_student_hook, sini
from .scheduler import CLEAN, LatentState, NoiseSchedule, build_schedule, ddim_invert_step, ddim_step

# ablation rows A..H: (gar, lat, sini)
ABLATION_ROWS = {
    "A": (False, False, False),
    "B": (True, False, False),
    "C": (False, True, False),
    "D": (False, False, True),
    "E": (True, True, False),
    "F": (True, False, True),
    "G": (False, True, True),
    "H": (True, True, True),
}


# -- image <-> latent ---------------------------------------------------------

def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def image_to_latent(image, size: int = 32) -> np.ndarray:
    """Bilinear resize to ``size x size`` and map ``[0, 255] -> [-1, 1]``; returns ``(3, size, size)`` float32."""
    if isinstance(image, (str, Path)):
        image = load_image(image)
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] not in (3, 4):
        raise ValueError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    im = Image.fromarray(arr[..., :3].astype(np.uint8), "RGB")
    if im.size != (size, size):
        im = im.resize((size, size), Image.BILINEAR)
    rgb = np.asarray(im, dtype=np.float32)
    return (rgb / 127.5 - 1.0).transpose(2, 0, 1).copy()


def latent_to_image(z) -> np.ndarray:
    """Clamp a ``(3, S, S)`` latent to ``[-1, 1]`` and quantise to an ``(S, S, 3)`` uint8 image."""
    z = np.asarray(z)
    if not np.all(np.isfinite(z)):
        raise NumericError("refusing to encode a non-finite latent")
    rgb = (np.clip(z, -1.0, 1.0).transpose(1, 2, 0) + 1.0) * 127.5
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def save_png(path, image: np.ndarray) -> None:
    from .tensor import atomic_write_bytes
    import io

    buf = io.BytesIO()
    Image.fromarray(image, "RGB").save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def _as_latent(source, model: Denoiser) -> np.ndarray:
    arr = source if isinstance(source, np.ndarray) else None
    if arr is not None and arr.shape == model.config.latent_shape and arr.dtype.kind == "f":
        return arr.astype(np.float32)
    return image_to_latent(source, model.config.latent_size)


# -- sampling loops -------------------------------------------------------------

def _advance(fn, schedule, state, eps, next_t, step):
    try:
        return fn(schedule, state, eps, next_t)
    except FloatingPointError as exc:
        raise NumericError(str(exc), step) from None


def invert(model: Denoiser, schedule: NoiseSchedule, z0, condition: int = NULL_CONDITION) -> np.ndarray:
    """Naive DDIM inversion from the clean latent up to ``schedule.step_indices[0]``.

    Each inversion step predicts noise at the current latent, conditioned on the
    timestep it moves to.
    """
    if schedule.inference_steps < 1:
        raise ValueError("schedule has no inference steps")
    state = LatentState(np.asarray(z0, dtype=np.float32), CLEAN)
    for ordinal in reversed(range(schedule.inference_steps)):
        t_next = int(schedule.step_indices[ordinal])
        eps = model.predict_noise(state.z, t_next, condition)
        state = _advance(ddim_invert_step, schedule, state, eps, t_next, ordinal)
    return state.z


def sample(model: Denoiser, schedule: NoiseSchedule, z_T, condition: int = NULL_CONDITION, step_hook=None,
           keep_latents: bool = False):
    """Deterministic DDIM sampling from ``z_T``; returns the clean latent (and per-step latents).

    ``step_hook.bind(ordinal)`` supplies the attention hook for each step.
    """
    state = LatentState(np.asarray(z_T, dtype=np.float32), int(schedule.step_indices[0]))
    latents = []
    for ordinal in range(schedule.inference_steps):
        hook = step_hook.bind(ordinal) if step_hook is not None else None
        eps = model.predict_noise(state.z, state.t, condition, hook)
        state = _advance(ddim_step, schedule, state, eps, schedule.next_lower(ordinal), ordinal)
        if keep_latents:
            latents.append(state.z)
    return (state.z, latents) if keep_latents else state.z


def _teacher_pass(model, schedule, z_T, condition):
    recorder = TraceRecorder()
    _, latents = sample(model, schedule, z_T, condition, recorder, keep_latents=True)
    return recorder.finish(z_T, latents)


def invert_image(image, schedule: NoiseSchedule, model: Denoiser,
                 condition: int = NULL_CONDITION) -> Tuple[np.ndarray, TeacherTrace]:
    """Invert ``image`` to ``z_T`` and replay the reconstruction, capturing every attention site.

    ``image`` may be an ``(H, W, 3)`` uint8 array, a path, or a latent of the model's shape.
    The trace's last latent is the plain reconstruction.
    """
    z_T = invert(model, schedule, _as_latent(image, model), condition)
    return z_T, _teacher_pass(model, schedule, z_T, condition)


def generate_teacher(condition: int, schedule: NoiseSchedule, model: Denoiser, seed: int):
    """Text-guided style teacher: sample from seeded Gaussian noise under ``condition``."""
    rng = np.random.default_rng(seed)
    z_T = rng.standard_normal(model.config.latent_shape).astype(np.float32)
    return z_T, _teacher_pass(model, schedule, z_T, condition)


def reconstruct(image, schedule: NoiseSchedule, model: Denoiser, condition: int = NULL_CONDITION) -> np.ndarray:
    """Invert then resample ``image`` with no modulation; returns the clean latent."""
    z_T = invert(model, schedule, _as_latent(image, model), condition)
    return sample(model, schedule, z_T, condition)


# -- transfer -----------------------------------------------------------------------

@dataclass
class TransferRequest:
    """``style_source`` is an image (array or path) for image-guided transfer or an int condition id for text-guided."""

    content_image: object
    style_source: object
    model: Union[Denoiser, str, Path]
    mod_config: ModulationConfig = field(default_factory=ModulationConfig)
    schedule: NoiseSchedule = field(default_factory=build_schedule)
    seed: int = 0
    content_condition: int = NULL_CONDITION
    keep_latents: bool = False

    def resolved_model(self) -> Denoiser:
        if not isinstance(self.model, Denoiser):
            self.model = Denoiser.load(self.model)
        return self.model

    @property
    def text_guided(self) -> bool:
        return isinstance(self.style_source, (int, np.integer))


@dataclass(frozen=True)
class Teachers:
    z_T_content: np.ndarray
    content: TeacherTrace
    z_T_style: np.ndarray
    style: TeacherTrace


@dataclass
class TransferResult:
    stylized_image: np.ndarray
    stylized_latent: np.ndarray
    z_T_content: np.ndarray
    z_T_style: np.ndarray
    z_T_main: np.ndarray
    content_trace: TeacherTrace
    style_trace: TeacherTrace
    latents: List[np.ndarray] = field(default_factory=list, repr=False)


def prepare_teachers(req: TransferRequest) -> Teachers:
    """Run both teacher passes.  They never depend on the modulation toggles."""
    model = req.resolved_model()
    z_c, trace_c = invert_image(req.content_image, req.schedule, model, req.content_condition)
    if req.text_guided:
        z_s, trace_s = generate_teacher(int(req.style_source), req.schedule, model, req.seed)
    else:
        z_s, trace_s = invert_image(req.style_source, req.schedule, model, NULL_CONDITION)
    return Teachers(z_c, trace_c, z_s, trace_s)


def transfer(req: TransferRequest, teachers: Optional[Teachers] = None) -> TransferResult:
    model = req.resolved_model()
    cfg = req.mod_config
    teachers = teachers or prepare_teachers(req)
    if cfg.sini_enabled:
        z_m = sini(teachers.z_T_content, teachers.z_T_style, cfg.gamma, cfg.adain_epsilon)
    else:
        z_m = teachers.z_T_content
    hook = make_student_hook(teachers.content, teachers.style, cfg)
    z0, latents = sample(model, req.schedule, z_m, req.content_condition, hook, keep_latents=True)
    return TransferResult(
        stylized_image=latent_to_image(z0),
        stylized_latent=z0,
        z_T_content=teachers.z_T_content,
        z_T_style=teachers.z_T_style,
        z_T_main=np.asarray(z_m, dtype=np.float32),
        content_trace=teachers.content,
        style_trace=teachers.style,
        latents=latents if req.keep_latents else [],
    )


def ablation_matrix(req: TransferRequest, toggles: Sequence[Tuple[bool, bool, bool]] = tuple(ABLATION_ROWS.values()),
                    teachers: Optional[Teachers] = None) -> List[TransferResult]:
    """One result per ``(gar, lat, sini)`` row; teachers are computed once and duplicate rows are reused."""
    from dataclasses import replace

    teachers = teachers or prepare_teachers(req)
    done: Dict[Tuple[bool, bool, bool], TransferResult] = {}
    out = []
    for row in toggles:
        row = tuple(bool(x) for x in row)
        if row not in done:
            sub = replace(req, mod_config=req.mod_config.toggled(*row))
            done[row] = transfer(sub, teachers)
        out.append(done[row])
    return out
