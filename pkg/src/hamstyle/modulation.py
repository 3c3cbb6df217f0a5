"""Heterogeneous attention modulation of a student pass by two frozen teacher traces.

* Global attention regulation: at self-attention sites the content teacher's
  Q/K/V are AdaIN-mapped onto the style teacher's statistics and convexly
  blended into the student's projections with weight ``alpha`` on the student.
* Local attention transplantation: at cross-attention sites the student's
  query is blended with the content teacher's query (weight ``beta`` on the
  student) while keys and values are taken from the style teacher.
* Style-infused noise initialization: the starting latent is the AdaIN fusion
  of the content and style inverted noises plus a ``gamma``-weighted content
  residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .attention import AttentionProjections, AttentionSiteId, SiteKind
from .errors import ConfigError, ShapeError, TraceIncompleteError
from .tensor import DEFAULT_EPSILON, adain, load_hamt, save_hamt

Range = Optional[Tuple[int, int]]


def _unit(name, value):
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class ModulationConfig:
    alpha: float = 0.75
    beta: float = 0.25
    gamma: float = 0.5
    gar_enabled: bool = True
    lat_enabled: bool = True
    sini_enabled: bool = True
    layer_range: Range = None  # inclusive; None = every layer
    step_range: Range = None  # inclusive inference-step ordinals; None = every step
    adain_epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        _unit("alpha", self.alpha)
        _unit("beta", self.beta)
        _unit("gamma", self.gamma)
        if self.adain_epsilon <= 0:
            raise ConfigError("adain_epsilon must be positive")
        for name in ("layer_range", "step_range"):
            r = getattr(self, name)
            if r is not None and not (len(r) == 2 and 0 <= r[0] <= r[1]):
                raise ConfigError(f"{name} must be an inclusive (lo, hi) pair with 0 <= lo <= hi, got {r}")

    def toggled(self, gar: bool, lat: bool, sini: bool) -> "ModulationConfig":
        from dataclasses import replace

        return replace(self, gar_enabled=gar, lat_enabled=lat, sini_enabled=sini)

    def covers(self, step: int, layer: int) -> bool:
        return _inside(self.step_range, step) and _inside(self.layer_range, layer)


def _inside(r: Range, i: int) -> bool:
    return r is None or r[0] <= i <= r[1]


def _check_same(a: np.ndarray, b: np.ndarray, what: str):
    if a.shape != b.shape:
        raise ShapeError(f"{what} shapes differ: {a.shape} vs {b.shape}")


# -- the three modulation operators ------------------------------------------

def gar_fuse(content: AttentionProjections, style: AttentionProjections, eps: float = DEFAULT_EPSILON,
             channel_axis: int = -1) -> AttentionProjections:
    """AdaIN each of content Q, K, V onto the matching style projection's per-feature statistics."""
    for name, c, s in zip("qkv", content.astuple(), style.astuple()):
        _check_same(c, s, f"content/style {name}")
    return AttentionProjections(*(
        adain(c, s, channel_axis, eps) for c, s in zip(content.astuple(), style.astuple())
    ))


def gar_blend(student: AttentionProjections, fused: AttentionProjections, alpha: float) -> AttentionProjections:
    """``alpha * student + (1 - alpha) * fused`` applied to Q, K and V."""
    _unit("alpha", alpha)
    for name, m, f in zip("qkv", student.astuple(), fused.astuple()):
        _check_same(m, f, f"student/fused {name}")
    return AttentionProjections(*(
        alpha * m + (1.0 - alpha) * f.astype(m.dtype, copy=False)
        for m, f in zip(student.astuple(), fused.astuple())
    ))


def lat_transplant(student_q, content_q, style_k, style_v, beta: float) -> AttentionProjections:
    """Query ``beta * student_q + (1 - beta) * content_q``; keys/values from the style teacher."""
    _unit("beta", beta)
    _check_same(student_q, content_q, "student/content query")
    q = beta * student_q + (1.0 - beta) * content_q.astype(student_q.dtype, copy=False)
    return AttentionProjections(q, style_k, style_v)


def sini(z_T_content, z_T_style, gamma: float, eps: float = DEFAULT_EPSILON, channel_axis: int = 0):
    """Initial student latent from the two inverted noises.

    Equals ``gamma * (z_c - A) + A`` with ``A = adain(z_c, z_s)``, evaluated as
    the convex combination ``gamma * z_c + (1 - gamma) * A`` so that ``gamma = 1``
    returns ``z_c`` and ``gamma = 0`` returns ``A`` exactly.
    """
    _unit("gamma", gamma)
    z_c, z_s = np.asarray(z_T_content), np.asarray(z_T_style)
    _check_same(z_c, z_s, "content/style noise")
    fused = adain(z_c, z_s, channel_axis, eps)
    return gamma * z_c + (1.0 - gamma) * fused.astype(z_c.dtype, copy=False)


# -- teacher traces -----------------------------------------------------------

def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TeacherTrace:
    """Read-only archive of one teacher pass.

    ``projections`` maps ``(step_ordinal, AttentionSiteId)`` to the projections
    seen at that site; ``z_T`` is the teacher's starting latent and ``latents``
    optionally holds the latent after each step.
    """

    projections: Mapping[Tuple[int, AttentionSiteId], AttentionProjections]
    z_T: np.ndarray
    steps: int
    layers: int
    latents: Tuple[np.ndarray, ...] = field(default=(), repr=False)

    def get(self, step: int, site: AttentionSiteId) -> AttentionProjections:
        try:
            return self.projections[(step, site)]
        except KeyError:
            raise TraceIncompleteError(step, site) from None

    def require(self, cfg: ModulationConfig, kinds):
        for step in range(self.steps):
            for layer in range(self.layers):
                if cfg.covers(step, layer):
                    for kind in kinds:
                        self.get(step, AttentionSiteId(layer, kind))

    def save(self, directory) -> None:
        """Write ``<step>/<layer>/<kind>/{q,k,v}.hamt``, ``z_T.hamt`` and ``manifest.txt``."""
        directory = Path(directory)
        for (step, site), p in sorted(self.projections.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            base = directory / str(step) / str(site.layer_index) / site.kind.value
            for name, arr in zip("qkv", p.astuple()):
                save_hamt(base / f"{name}.hamt", arr)
        save_hamt(directory / "z_T.hamt", self.z_T)
        for i, z in enumerate(self.latents):
            save_hamt(directory / "latents" / f"{i}.hamt", z)
        kinds = sorted({site.kind.value for _, site in self.projections})
        manifest = (
            f"steps 0 {self.steps - 1}\nlayers 0 {self.layers - 1}\nkinds {' '.join(kinds)}\n"
            f"latents {len(self.latents)}\n"
        )
        (directory / "manifest.txt").write_text(manifest)

    @classmethod
    def load(cls, directory) -> "TeacherTrace":
        directory = Path(directory)
        meta = {}
        for line in (directory / "manifest.txt").read_text().splitlines():
            key, *vals = line.split()
            meta[key] = vals
        steps = int(meta["steps"][1]) + 1
        n_layers = int(meta["layers"][1]) + 1
        projections = {}
        for step in range(steps):
            for layer in range(n_layers):
                for kind in meta["kinds"]:
                    base = directory / str(step) / str(layer) / kind
                    if base.is_dir():
                        projections[(step, AttentionSiteId(layer, SiteKind(kind)))] = AttentionProjections(
                            *(_frozen(load_hamt(base / f"{n}.hamt")) for n in "qkv")
                        )
        latents = tuple(_frozen(load_hamt(directory / "latents" / f"{i}.hamt"))
                        for i in range(int(meta.get("latents", ["0"])[0])))
        return cls(MappingProxyType(projections), _frozen(load_hamt(directory / "z_T.hamt")), steps, n_layers, latents)


class TraceRecorder:
    """Step hook that records every site's projections and passes them through unchanged."""

    def __init__(self):
        self._store: Dict[Tuple[int, AttentionSiteId], AttentionProjections] = {}
        self._max_step = -1
        self._max_layer = -1

    def bind(self, step: int):
        def record(site: AttentionSiteId, p: AttentionProjections) -> AttentionProjections:
            self._store[(step, site)] = AttentionProjections(*(_frozen(a) for a in p.astuple()))
            self._max_step = max(self._max_step, step)
            self._max_layer = max(self._max_layer, site.layer_index)
            return p

        return record

    def finish(self, z_T, latents=()) -> TeacherTrace:
        return TeacherTrace(
            MappingProxyType(dict(self._store)), _frozen(z_T), self._max_step + 1, self._max_layer + 1,
            tuple(_frozen(z) for z in latents),
        )


class StudentHook:
    """Step hook applying GAR at self sites and LAT at cross sites of the student pass."""

    def __init__(self, content: TeacherTrace, style: TeacherTrace, cfg: ModulationConfig):
        self.content, self.style, self.cfg = content, style, cfg
        self._fused: Dict[Tuple[int, AttentionSiteId], AttentionProjections] = {}

    def fused(self, step: int, site: AttentionSiteId) -> AttentionProjections:
        key = (step, site)
        if key not in self._fused:
            self._fused[key] = gar_fuse(self.content.get(step, site), self.style.get(step, site),
                                        self.cfg.adain_epsilon)
        return self._fused[key]

    def bind(self, step: int):
        cfg = self.cfg

        def hook(site: AttentionSiteId, p: AttentionProjections) -> AttentionProjections:
            if not cfg.covers(step, site.layer_index):
                return p
            if site.kind is SiteKind.SELF and cfg.gar_enabled:
                return gar_blend(p, self.fused(step, site), cfg.alpha)
            if site.kind is SiteKind.CROSS and cfg.lat_enabled:
                c = self.content.get(step, site)
                s = self.style.get(step, site)
                return lat_transplant(p.q, c.q, s.k, s.v, cfg.beta)
            return p

        return hook


def make_student_hook(content: TeacherTrace, style: TeacherTrace, cfg: ModulationConfig) -> StudentHook:
    """Validate both traces against ``cfg`` and return the student's step hook."""
    if (content.steps, content.layers) != (style.steps, style.layers):
        raise ShapeError(
            f"teacher traces cover different grids: {(content.steps, content.layers)} vs {(style.steps, style.layers)}"
        )
    for name, r, bound in (("step_range", cfg.step_range, content.steps), ("layer_range", cfg.layer_range, content.layers)):
        if r is not None and r[1] >= bound:
            raise ConfigError(f"{name} {r} exceeds trace bound {bound}")
    kinds = [k for k, on in ((SiteKind.SELF, cfg.gar_enabled), (SiteKind.CROSS, cfg.lat_enabled)) if on]
    content.require(cfg, kinds)
    style.require(cfg, kinds)
    return StudentHook(content, style, cfg)
