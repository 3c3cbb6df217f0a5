"""``ham`` command line: train, reconstruct, invert, transfer, ablate, eval, gen-fixtures.

Exit codes: 0 success, 1 runtime or numeric failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import io
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import config as C
from .data import STYLE_IDS, content_image, style_image
from .denoiser import Denoiser
from .errors import ConfigError, HamError
from .metrics import ScoreCSVError, channel_stat_distance, read_scores, score_report
from .pipeline import (ABLATION_ROWS, TransferRequest, ablation_matrix, invert_image, latent_to_image,
                       prepare_teachers, reconstruct, save_png, transfer)
from .tensor import atomic_write_bytes, save_hamt

log = logging.getLogger("hamstyle")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _common(p):
    p.add_argument("--config", help="flat 'key = value' config file")
    p.add_argument("--print-config", action="store_true", help="echo the resolved config")
    p.add_argument("--seed", type=int)


def _schedule_flags(p, steps_key="steps"):
    p.add_argument("--timesteps", type=int)
    p.add_argument("--beta-start", dest="beta_start", type=float)
    p.add_argument("--beta-end", dest="beta_end", type=float)
    p.add_argument("--steps", dest=steps_key, type=int)


def _modulation_flags(p):
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--no-gar", dest="gar", action="store_const", const=False)
    p.add_argument("--no-lat", dest="lat", action="store_const", const=False)
    p.add_argument("--no-sini", dest="sini", action="store_const", const=False)
    p.add_argument("--layer-range", dest="layer_range", help="inclusive 'lo-hi'")
    p.add_argument("--step-range", dest="step_range", help="inclusive 'lo-hi'")
    p.add_argument("--adain-epsilon", dest="adain_epsilon", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ham", description=__doc__.splitlines()[0], allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", allow_abbrev=False, help="train the toy denoiser")
    _common(p)
    _schedule_flags(p, steps_key="train_steps")
    for key in ("width", "num_blocks", "heads", "context_tokens", "context_dim", "patch_size",
                "norm_groups", "latent_size"):
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--out", required=True)

    for name, text in (("reconstruct", "invert and resample an image"),
                       ("invert", "invert an image and dump z_T and its trace")):
        p = sub.add_parser(name, allow_abbrev=False, help=text)
        _common(p)
        _schedule_flags(p)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--content", required=True)
        p.add_argument("--out", required=True)

    for name, text in (("transfer", "stylize a content image"), ("ablate", "run the 8 module toggle rows")):
        p = sub.add_parser(name, allow_abbrev=False, help=text)
        _common(p)
        _schedule_flags(p)
        _modulation_flags(p)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--content", required=True)
        p.add_argument("--style", help="style image (image-guided)")
        p.add_argument("--style-id", dest="style_id", type=int, help="style condition id (text-guided)")
        p.add_argument("--out", required=True)
        if name == "transfer":
            p.add_argument("--dump-trace", dest="dump_trace")
            p.add_argument("--dump-latents", dest="dump_latents")

    p = sub.add_parser("eval", allow_abbrev=False, help="append dc, cc, artfid to a scores CSV")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scores")
    src.add_argument("--table1", action="store_true", help="use the bundled published score table")
    p.add_argument("--out", help="output CSV (default: stdout)")

    p = sub.add_parser("gen-fixtures", allow_abbrev=False, help="write procedural content/style PNGs")
    _common(p)
    p.add_argument("--count", type=int)
    p.add_argument("--out", required=True)
    return parser


_NON_CONFIG = {"command", "config", "print_config", "table1"}


def _resolve(args) -> dict:
    overrides = {k: v for k, v in vars(args).items() if k not in _NON_CONFIG}
    return C.resolve(args.config, overrides)


def _need_file(path, what):
    if path is None or not Path(path).is_file():
        raise UsageError(f"{what} not found: {path}")


def _need_ckpt(path):
    if path is None or not (Path(path) / "manifest.txt").is_file():
        raise UsageError(f"checkpoint not found: {path}")
    return Denoiser.load(path)


def _request(cfg, model) -> TransferRequest:
    _need_file(cfg["content"], "content image")
    if (cfg["style"] is None) == (cfg["style_id"] is None):
        raise UsageError("give exactly one of --style or --style-id")
    if cfg["style"] is not None:
        _need_file(cfg["style"], "style image")
        style = cfg["style"]
    else:
        style = cfg["style_id"]
        if not 0 <= style < model.config.num_conditions:
            raise UsageError(f"--style-id must be in [0, {model.config.num_conditions})")
    return TransferRequest(cfg["content"], style, model, C.modulation_config(cfg), C.schedule(cfg), cfg["seed"])


def cmd_train(cfg):
    from .data import ToyDataset
    from .train import train

    result = train(ToyDataset(cfg["latent_size"]), cfg["train_steps"], cfg["lr"], cfg["seed"],
                   C.denoiser_config(cfg), C.schedule({**cfg, "steps": 1}), cfg["batch_size"],
                   cfg["cond_dropout"], log_every=max(1, cfg["train_steps"] // 10))
    out = Path(cfg["out"])
    result.model.save(out)
    lines = ["step,loss\n"] + [f"{i},{loss!r}\n" for i, loss in enumerate(result.losses)]
    atomic_write_bytes(out / "loss.csv", "".join(lines).encode())
    log.info("wrote checkpoint to %s (final loss %.5f)", out, result.losses[-1])


def cmd_reconstruct(cfg):
    model = _need_ckpt(cfg["ckpt"])
    _need_file(cfg["content"], "content image")
    z0 = reconstruct(cfg["content"], C.schedule(cfg), model)
    save_png(cfg["out"], latent_to_image(z0))


def cmd_invert(cfg):
    model = _need_ckpt(cfg["ckpt"])
    _need_file(cfg["content"], "content image")
    z_T, trace = invert_image(cfg["content"], C.schedule(cfg), model)
    out = Path(cfg["out"])
    save_hamt(out / "z_T.hamt", z_T)
    trace.save(out / "trace")


def cmd_transfer(cfg):
    model = _need_ckpt(cfg["ckpt"])
    result = transfer(_request(cfg, model))
    save_png(cfg["out"], result.stylized_image)
    if cfg["dump_trace"]:
        result.content_trace.save(Path(cfg["dump_trace"]) / "content")
        result.style_trace.save(Path(cfg["dump_trace"]) / "style")
    if cfg["dump_latents"]:
        d = Path(cfg["dump_latents"])
        save_hamt(d / "z_T_content.hamt", result.z_T_content)
        save_hamt(d / "z_T_style.hamt", result.z_T_style)
        save_hamt(d / "z_T_main.hamt", result.z_T_main)


def cmd_ablate(cfg):
    model = _need_ckpt(cfg["ckpt"])
    req = _request(cfg, model)
    teachers = prepare_teachers(req)
    results = ablation_matrix(req, tuple(ABLATION_ROWS.values()), teachers)
    style_rec = teachers.style.latents[-1]
    out = Path(cfg["out"])
    lines = ["row,gar,lat,sini,stat_distance\n"]
    for (name, (g, l, s)), res in zip(ABLATION_ROWS.items(), results):
        save_png(out / f"{name}.png", res.stylized_image)
        d = channel_stat_distance(res.stylized_latent, style_rec)
        lines.append(f"{name},{int(g)},{int(l)},{int(s)},{d:.6f}\n")
    atomic_write_bytes(out / "summary.csv", "".join(lines).encode())


def cmd_eval(cfg, args):
    if args.table1:
        text = resources.files("hamstyle").joinpath("data/table1.csv").read_text()
    else:
        _need_file(cfg["scores"], "scores CSV")
        text = Path(cfg["scores"]).read_text()
    try:
        rows = read_scores(io.StringIO(text))
    except ScoreCSVError as exc:
        raise UsageError(str(exc)) from None
    report = score_report(rows)
    if cfg["out"]:
        atomic_write_bytes(cfg["out"], report.encode())
    else:
        sys.stdout.write(report)


def cmd_gen_fixtures(cfg):
    rng = np.random.default_rng(cfg["seed"])
    out = Path(cfg["out"])
    names = list(STYLE_IDS)
    for i in range(cfg["count"]):
        save_png(out / f"content_{i:02d}.png", latent_to_image(content_image(rng, cfg["latent_size"])))
        name = names[i % len(names)]
        save_png(out / f"style_{i:02d}_{name}.png", latent_to_image(style_image(name, rng, cfg["latent_size"])))
    table = resources.files("hamstyle").joinpath("data/table1.csv").read_bytes()
    atomic_write_bytes(out / "table1.csv", table)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _resolve(args)
        if args.print_config:
            sys.stdout.write(C.to_text(cfg))
        handler = {
            "train": cmd_train, "reconstruct": cmd_reconstruct, "invert": cmd_invert,
            "transfer": cmd_transfer, "ablate": cmd_ablate, "gen-fixtures": cmd_gen_fixtures,
        }.get(args.command)
        if handler is None:
            cmd_eval(cfg, args)
        else:
            handler(cfg)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"ham {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HamError, FloatingPointError, ValueError, OSError) as exc:
        print(f"ham {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
