"""Flat run configuration: defaults <- HAM_SEED <- ``key = value`` file <- command-line flags."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from .denoiser import DenoiserConfig
from .errors import ConfigError
from .modulation import ModulationConfig
from .scheduler import NoiseSchedule, build_schedule


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _range(text):
    if text is None or isinstance(text, tuple):
        return text
    text = str(text).strip()
    if text in ("", "all", "none"):
        return None
    lo, sep, hi = text.partition("-")
    if not sep:
        raise ValueError(f"range must look like 'lo-hi', got {text!r}")
    return int(lo), int(hi)


def _opt_str(text):
    return None if text in (None, "") else str(text)


def _opt_int(text):
    return None if text in (None, "") else int(text)


# key -> (parser, default)
KEYS: Dict[str, tuple] = {
    # denoiser
    "latent_channels": (int, 3),
    "latent_size": (int, 32),
    "width": (int, 64),
    "num_blocks": (int, 4),
    "heads": (int, 1),
    "context_tokens": (int, 4),
    "context_dim": (int, 64),
    "patch_size": (int, 4),
    "norm_groups": (int, 8),
    "num_conditions": (int, 5),
    # schedule
    "timesteps": (int, 1000),
    "beta_start": (float, 8.5e-4),
    "beta_end": (float, 0.012),
    "steps": (int, 50),
    # modulation
    "alpha": (float, 0.75),
    "beta": (float, 0.25),
    "gamma": (float, 0.5),
    "gar": (_bool, True),
    "lat": (_bool, True),
    "sini": (_bool, True),
    "layer_range": (_range, None),
    "step_range": (_range, None),
    "adain_epsilon": (float, 1e-5),
    # training
    "train_steps": (int, 400),
    "lr": (float, 1e-3),
    "batch_size": (int, 16),
    "cond_dropout": (float, 0.3),
    # run
    "seed": (int, 0),
    "ckpt": (_opt_str, None),
    "out": (_opt_str, None),
    "content": (_opt_str, None),
    "style": (_opt_str, None),
    "style_id": (_opt_int, None),
    "scores": (_opt_str, None),
    "dump_trace": (_opt_str, None),
    "dump_latents": (_opt_str, None),
    "count": (int, 10),
}


def parse_config_text(text: str, origin: str = "<config>") -> Dict[str, Any]:
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{origin}:{n}: expected 'key = value'")
        if key not in KEYS:
            raise ConfigError(f"{origin}:{n}: unknown key {key!r}")
        values[key] = val.strip()
    return values


def resolve(file: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None,
            env: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    """Merge all layers and parse every value; raises :class:`ConfigError` on any bad key or value."""
    env = os.environ if env is None else env
    raw: Dict[str, Any] = {k: d for k, (_, d) in KEYS.items()}
    if env.get("HAM_SEED", "") != "":
        raw["seed"] = env["HAM_SEED"]
    if file is not None:
        path = Path(file)
        if not path.is_file():
            raise ConfigError(f"config file {file} not found")
        raw.update(parse_config_text(path.read_text(), str(file)))
    for key, val in (overrides or {}).items():
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}")
        if val is not None:
            raw[key] = val
    out = {}
    for key, val in raw.items():
        parser = KEYS[key][0]
        try:
            out[key] = val if val is None else parser(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {val!r} ({exc})") from None
    validate(out)
    return out


def validate(cfg: Mapping[str, Any]) -> None:
    for key in ("steps", "train_steps", "batch_size", "count", "timesteps"):
        if cfg[key] < 1:
            raise ConfigError(f"{key} must be >= 1, got {cfg[key]}")
    if cfg["lr"] <= 0:
        raise ConfigError("lr must be positive")
    if not 0 <= cfg["cond_dropout"] <= 1:
        raise ConfigError("cond_dropout must lie in [0, 1]")
    if cfg["steps"] > cfg["timesteps"]:
        raise ConfigError(f"steps ({cfg['steps']}) cannot exceed timesteps ({cfg['timesteps']})")
    # constructing the typed configs runs their own checks
    denoiser_config(cfg)
    modulation_config(cfg)
    try:
        schedule(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def denoiser_config(cfg) -> DenoiserConfig:
    return DenoiserConfig(
        latent_channels=cfg["latent_channels"], latent_size=cfg["latent_size"], width=cfg["width"],
        num_blocks=cfg["num_blocks"], heads=cfg["heads"], context_tokens=cfg["context_tokens"],
        context_dim=cfg["context_dim"], patch_size=cfg["patch_size"], norm_groups=cfg["norm_groups"],
        num_conditions=cfg["num_conditions"],
    )


def modulation_config(cfg) -> ModulationConfig:
    return ModulationConfig(
        alpha=cfg["alpha"], beta=cfg["beta"], gamma=cfg["gamma"],
        gar_enabled=cfg["gar"], lat_enabled=cfg["lat"], sini_enabled=cfg["sini"],
        layer_range=cfg["layer_range"], step_range=cfg["step_range"], adain_epsilon=cfg["adain_epsilon"],
    )


def schedule(cfg) -> NoiseSchedule:
    return build_schedule(cfg["timesteps"], cfg["beta_start"], cfg["beta_end"], cfg["steps"])


def to_text(cfg: Mapping[str, Any]) -> str:
    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, tuple):
            return f"{v[0]}-{v[1]}"
        return str(v).lower() if isinstance(v, bool) else str(v)

    return "".join(f"{k} = {fmt(cfg[k])}\n" for k in KEYS)
