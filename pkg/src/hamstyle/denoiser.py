"""Small conditional noise-prediction network with self- and cross-attention blocks.

The latent ``(C, S, S)`` is cut into ``patch x patch`` tiles, each tile becomes a
token, and tokens flow through ``num_blocks`` blocks of
``[norm -> self-attention -> norm -> cross-attention -> norm -> MLP]`` with
residuals.  A sinusoidal timestep embedding is added to every token, and the
conditioning context is a learned ``(context_tokens, context_dim)`` sequence
per condition id.  The output projection is zero-initialised, so a fresh model
predicts zero noise.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from . import layers
from .attention import AttentionSiteId, AttentionWeights, SiteKind, block_backward, block_forward
from .errors import ConfigError, ShapeError
from .tensor import atomic_write_bytes, hamt_bytes, load_hamt

NULL_CONDITION = 0
MANIFEST = "manifest.txt"
CONFIG_FILE = "config.txt"


@dataclass(frozen=True)
class DenoiserConfig:
    latent_channels: int = 3
    latent_size: int = 32
    width: int = 64
    num_blocks: int = 4
    heads: int = 1
    context_tokens: int = 4
    context_dim: int = 64
    patch_size: int = 4
    norm_groups: int = 8
    num_conditions: int = 5
    mlp_ratio: int = 4

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, np.integer)) or v <= 0:
                raise ConfigError(f"{f.name} must be a positive integer, got {v!r}")
        if self.width % self.heads:
            raise ConfigError(f"width {self.width} not divisible by heads {self.heads}")
        if self.width % self.norm_groups:
            raise ConfigError(f"width {self.width} not divisible by norm_groups {self.norm_groups}")
        if self.latent_size % self.patch_size:
            raise ConfigError(f"latent_size {self.latent_size} not divisible by patch_size {self.patch_size}")

    @property
    def tokens(self) -> int:
        return (self.latent_size // self.patch_size) ** 2

    @property
    def patch_dim(self) -> int:
        return self.latent_channels * self.patch_size**2

    @property
    def latent_shape(self):
        return (self.latent_channels, self.latent_size, self.latent_size)

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in dataclasses.asdict(self).items())

    @classmethod
    def from_text(cls, text: str) -> "DenoiserConfig":
        values = {}
        for line in text.splitlines():
            if line.strip():
                key, _, val = line.partition("=")
                values[key.strip()] = int(val)
        return cls(**values)


def param_shapes(cfg: DenoiserConfig) -> Dict[str, tuple]:
    w, hid = cfg.width, cfg.width * cfg.mlp_ratio
    shapes = {
        "cond": (cfg.num_conditions, cfg.context_tokens, cfg.context_dim),
        "patch_in.w": (cfg.patch_dim, w),
        "patch_in.b": (w,),
        "pos": (cfg.tokens, w),
        "time.w1": (w, w),
        "time.b1": (w,),
        "time.w2": (w, w),
        "time.b2": (w,),
    }
    for i in range(cfg.num_blocks):
        for kind in ("self", "cross"):
            p = f"blocks.{i}.{kind}."
            kv_in = w if kind == "self" else cfg.context_dim
            shapes.update({
                p + "norm_gain": (w,), p + "norm_bias": (w,),
                p + "wq": (w, w), p + "wk": (kv_in, w), p + "wv": (kv_in, w), p + "wo": (w, w),
            })
        p = f"blocks.{i}.mlp."
        shapes.update({
            p + "norm_gain": (w,), p + "norm_bias": (w,),
            p + "w1": (w, hid), p + "b1": (hid,), p + "w2": (hid, w), p + "b2": (w,),
        })
    shapes.update({
        "out.norm_gain": (w,), "out.norm_bias": (w,),
        "out.w": (w, cfg.patch_dim), "out.b": (cfg.patch_dim,),
    })
    return shapes


def init_params(cfg: DenoiserConfig, seed: int = 0, zero_init_out: bool = True, dtype=np.float64):
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith("norm_gain"):
            arr = np.ones(shape)
        elif name.endswith(("norm_bias", ".b", ".b1", ".b2")):
            arr = np.zeros(shape)
        elif name in ("cond", "pos"):
            arr = rng.normal(0.0, 0.5, shape)
        else:
            arr = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), shape)
        params[name] = arr
    if zero_init_out:
        params["out.w"] = np.zeros_like(params["out.w"])
    return {k: v.astype(dtype) for k, v in params.items()}


class Denoiser:
    """Noise predictor ``eps(z_t, t, c)`` over a fixed :class:`DenoiserConfig`.

    Inference runs in the dtype of the stored parameters.
    """

    def __init__(self, config: DenoiserConfig, params: Dict[str, np.ndarray]):
        expected = param_shapes(config)
        if set(params) != set(expected):
            missing = sorted(set(expected) - set(params))
            extra = sorted(set(params) - set(expected))
            raise ConfigError(f"parameter names do not match config (missing {missing}, extra {extra})")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ConfigError(f"{name} has shape {params[name].shape}, config expects {shape}")
        self.config = config
        self.params = params

    @classmethod
    def initialize(cls, config: DenoiserConfig = DenoiserConfig(), seed: int = 0, zero_init_out=True, dtype=np.float32):
        return cls(config, init_params(config, seed, zero_init_out, dtype))

    @property
    def dtype(self):
        return self.params["patch_in.w"].dtype

    def astype(self, dtype) -> "Denoiser":
        return Denoiser(self.config, {k: v.astype(dtype) for k, v in self.params.items()})

    def site_weights(self, layer: int, kind) -> AttentionWeights:
        p = f"blocks.{layer}.{SiteKind(kind).value}."
        P = self.params
        return AttentionWeights(
            P[p + "wq"], P[p + "wk"], P[p + "wv"], P[p + "wo"],
            P[p + "norm_gain"], P[p + "norm_bias"], self.config.norm_groups, self.config.heads,
        )

    def context(self, cond) -> np.ndarray:
        cond = np.atleast_1d(np.asarray(cond))
        if cond.dtype.kind not in "iu" or np.any(cond < 0) or np.any(cond >= self.config.num_conditions):
            raise ValueError(f"condition id out of range [0, {self.config.num_conditions}): {cond}")
        return self.params["cond"][cond]

    # -- forward / backward ---------------------------------------------------

    def forward(self, z, t, cond, hook=None, cache: Optional[dict] = None):
        """Batched prediction; ``z`` is ``(B, C, S, S)``, ``t`` and ``cond`` length ``B``."""
        cfg, P = self.config, self.params
        if z.ndim != 4 or z.shape[1:] != cfg.latent_shape:
            raise ShapeError(f"latent batch must be (B, {cfg.latent_shape}), got {z.shape}")
        z = z.astype(self.dtype, copy=False)
        t = np.broadcast_to(np.asarray(t), (z.shape[0],))
        ctx = self.context(np.broadcast_to(np.asarray(cond), (z.shape[0],)))

        tokens = layers.patchify(z, cfg.patch_size)
        te = layers.timestep_embedding(t, cfg.width).astype(self.dtype)
        tu = te @ P["time.w1"] + P["time.b1"]
        temb = layers.silu(tu) @ P["time.w2"] + P["time.b2"]
        h = tokens @ P["patch_in.w"] + P["patch_in.b"] + P["pos"] + temb[:, None, :]

        blocks = []
        for i in range(cfg.num_blocks):
            saved = None if cache is None else {}
            sv_self = None if cache is None else {}
            sv_cross = None if cache is None else {}
            h = block_forward(h, None, self.site_weights(i, "self"), AttentionSiteId(i, SiteKind.SELF), hook, sv_self)
            h = block_forward(h, ctx, self.site_weights(i, "cross"), AttentionSiteId(i, SiteKind.CROSS), hook, sv_cross)
            m = f"blocks.{i}.mlp."
            a, gn = layers.group_norm(h, P[m + "norm_gain"], P[m + "norm_bias"], cfg.norm_groups)
            u = a @ P[m + "w1"] + P[m + "b1"]
            h = h + layers.silu(u) @ P[m + "w2"] + P[m + "b2"]
            if cache is not None:
                saved = {"self": sv_self, "cross": sv_cross, "a": a, "gn": gn, "u": u}
                blocks.append(saved)

        a, gn = layers.group_norm(h, P["out.norm_gain"], P["out.norm_bias"], cfg.norm_groups)
        y = a @ P["out.w"] + P["out.b"]
        if cache is not None:
            cache.update(tokens=tokens, te=te, tu=tu, blocks=blocks, a=a, gn=gn, cond=np.asarray(cond), ctx=ctx,
                         batch=z.shape[0])
        return layers.unpatchify(y, cfg.latent_channels, cfg.latent_size, cfg.patch_size)

    def backward(self, cache: dict, dout) -> Dict[str, np.ndarray]:
        """Parameter gradients given ``dL/d(output)`` and the cache of :meth:`forward`."""
        cfg, P = self.config, self.params
        grads = {k: np.zeros_like(v) for k, v in P.items()}
        dy = layers.patchify(dout, cfg.patch_size)

        da, grads["out.w"], grads["out.b"] = layers.linear_backward(dy, cache["a"], P["out.w"], True)
        dh, grads["out.norm_gain"], grads["out.norm_bias"] = layers.group_norm_backward(
            da, cache["gn"], P["out.norm_gain"], cfg.norm_groups
        )
        dctx = np.zeros_like(cache["ctx"])
        for i in reversed(range(cfg.num_blocks)):
            s = cache["blocks"][i]
            m = f"blocks.{i}.mlp."
            act = layers.silu(s["u"])
            dact, grads[m + "w2"], grads[m + "b2"] = layers.linear_backward(dh, act, P[m + "w2"], True)
            du = layers.silu_backward(dact, s["u"])
            da, grads[m + "w1"], grads[m + "b1"] = layers.linear_backward(du, s["a"], P[m + "w1"], True)
            dn, grads[m + "norm_gain"], grads[m + "norm_bias"] = layers.group_norm_backward(
                da, s["gn"], P[m + "norm_gain"], cfg.norm_groups
            )
            dh = dh + dn
            for kind, key in ((SiteKind.CROSS, "cross"), (SiteKind.SELF, "self")):
                dh, dc, g = block_backward(dh, s[key], self.site_weights(i, kind), AttentionSiteId(i, kind))
                for name, val in g.items():
                    grads[f"blocks.{i}.{key}.{name}"] = val
                if dc is not None:
                    dctx += dc

        grads["pos"] = dh.sum(axis=0)
        _, grads["patch_in.w"], grads["patch_in.b"] = layers.linear_backward(dh, cache["tokens"], P["patch_in.w"], True)
        dtemb = dh.sum(axis=1)
        dact, grads["time.w2"], grads["time.b2"] = layers.linear_backward(dtemb, layers.silu(cache["tu"]), P["time.w2"], True)
        dtu = layers.silu_backward(dact, cache["tu"])
        _, grads["time.w1"], grads["time.b1"] = layers.linear_backward(dtu, cache["te"], P["time.w1"], True)
        cond = np.broadcast_to(cache["cond"], (cache["batch"],))
        np.add.at(grads["cond"], cond, dctx)
        return grads

    def predict_noise(self, z_t, t: int, c=NULL_CONDITION, hook=None) -> np.ndarray:
        """Predicted noise for a single latent ``(C, S, S)``; output has the same shape."""
        z_t = np.asarray(z_t)
        if z_t.shape != self.config.latent_shape:
            raise ShapeError(f"latent must have shape {self.config.latent_shape}, got {z_t.shape}")
        c = getattr(c, "condition_id", c)
        return self.forward(z_t[None], np.array([t]), np.array([c]), hook=hook)[0]

    # -- checkpoints ----------------------------------------------------------

    def save(self, directory) -> None:
        """Write one HAMT file per parameter plus ``manifest.txt`` and ``config.txt``."""
        directory = Path(directory)
        lines = []
        for name in sorted(self.params):
            arr = self.params[name]
            fname = f"{name}.hamt"
            atomic_write_bytes(directory / fname, hamt_bytes(arr))
            lines.append(f"{name} {','.join(map(str, arr.shape))} {fname}\n")
        atomic_write_bytes(directory / CONFIG_FILE, self.config.to_text().encode())
        atomic_write_bytes(directory / MANIFEST, "".join(lines).encode())

    @classmethod
    def load(cls, directory, expected_config: Optional[DenoiserConfig] = None) -> "Denoiser":
        directory = Path(directory)
        if not (directory / MANIFEST).is_file():
            raise FileNotFoundError(f"no checkpoint manifest in {directory}")
        config = DenoiserConfig.from_text((directory / CONFIG_FILE).read_text())
        if expected_config is not None and expected_config != config:
            raise ConfigError(f"checkpoint config {config} does not match requested {expected_config}")
        params = {}
        for line in (directory / MANIFEST).read_text().splitlines():
            if not line.strip():
                continue
            name, shape, fname = line.split()
            arr = load_hamt(directory / fname)
            want = tuple(int(s) for s in shape.split(",") if s)
            if arr.shape != want:
                raise ConfigError(f"{fname} has shape {arr.shape}, manifest says {want}")
            params[name] = arr
        return cls(config, params)


def mse_loss_and_grads(model: Denoiser, z_t, t, cond, eps):
    """Mean squared error between ``eps`` and the prediction, with parameter gradients."""
    cache = {}
    pred = model.forward(z_t, t, cond, cache=cache)
    diff = pred - eps
    loss = float(np.mean(diff**2))
    grads = model.backward(cache, 2.0 * diff / diff.size)
    return loss, grads
