"""Command line entry point.

One binary, seven subcommands covering the whole pipeline:

    hyperlips make-toy-data --out data/ --clips 8 --seed 7
    hyperlips train-sync    --data data/ --out runs/sync --steps 600
    hyperlips train-base    --data data/ --sync-ckpt runs/sync/ckpts/sync_latest.pt \
                            --out runs/base --steps 2000
    hyperlips build-stage2  --base-ckpt runs/base/ckpts/base_latest.pt \
                            --data data/ --out stage2/
    hyperlips train-hr      --data stage2/ --out runs/hr --steps 800
    hyperlips dub           --video data/clips/clip_0000 --audio a.wav \
                            --base-ckpt ... --out dubbed
    hyperlips eval          --gen dubbed --gt data/clips/clip_0000 \
                            --audio a.wav --sync-ckpt ... --out report.json

Exit codes: 0 success, 1 usage error, 2 runtime error. Destinations are
refused when they already exist unless --force is given. Every command
leaves a resolved-config snapshot next to (or inside) its output.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import TrainConfig, load_config
from .errors import HyperLipsError, UsageError


class _Parser(argparse.ArgumentParser):
    """argparse that signals usage problems as UsageError (exit code 1)."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _check_out(path: str, force: bool) -> None:
    if Path(path).exists() and not force:
        raise UsageError(
            f"output {path} already exists; pass --force to overwrite")


def _write_snapshot(target: Path, payload: dict) -> None:
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(payload, sort_keys=True, indent=1,
                                 default=str))


def _resolved(args: argparse.Namespace) -> dict:
    skip = {"func"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def _train_config(args: argparse.Namespace, **extra) -> TrainConfig:
    """Config file first, then every explicitly passed flag on top."""
    cfg = load_config(args.config) if args.config else TrainConfig()
    overrides = {k: v for k, v in dict(
        profile=args.profile, batch_size=args.batch_size, steps=args.steps,
        learning_rate=args.lr, seed=args.seed).items() if v is not None}
    overrides.update({k: v for k, v in extra.items() if v is not None})
    return cfg.with_overrides(**overrides)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file; flags override it")
    p.add_argument("--profile", choices=["toy", "full"])
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--force", action="store_true",
                   help="overwrite an existing output")


def _cmd_make_toy_data(args) -> int:
    from .data import make_toy_dataset

    _check_out(args.out, args.force)
    make_toy_dataset(args.clips, args.seed, args.out, n_frames=args.frames)
    _write_snapshot(Path(args.out) / "config_resolved.json", _resolved(args))
    print(f"wrote {args.clips} clips to {args.out}")
    return 0


def _cmd_train_sync(args) -> int:
    from .sync import train_sync

    _check_out(args.out, args.force)
    cfg = _train_config(args, dataset_dir=args.data, run_dir=args.out)
    ckpt = train_sync(cfg)
    print(f"sync expert checkpoint: {ckpt}")
    return 0


def _cmd_train_base(args) -> int:
    from .training import train_base

    _check_out(args.out, args.force)
    cfg = _train_config(args, dataset_dir=args.data, run_dir=args.out,
                        sync_ckpt=args.sync_ckpt)
    ckpt = train_base(cfg)
    print(f"base generator checkpoint: {ckpt}")
    return 0


def _cmd_build_stage2(args) -> int:
    from .training import build_stage2_dataset

    _check_out(args.out, args.force)
    out = build_stage2_dataset(args.base_ckpt, args.data, args.out,
                               hr_scale=args.scale)
    _write_snapshot(Path(args.out) / "config_resolved.json", _resolved(args))
    manifest = json.loads((out / "manifest.json").read_text())
    print(f"stage-2 dataset: {manifest['n_samples']} samples, "
          f"{manifest['n_skipped']} skipped")
    return 0


def _cmd_train_hr(args) -> int:
    from .training import train_hr

    _check_out(args.out, args.force)
    cfg = _train_config(args, dataset_dir=args.data, run_dir=args.out,
                        hr_scale=args.scale)
    ckpt = train_hr(cfg)
    print(f"hr decoder checkpoint: {ckpt}")
    return 0


def _cmd_dub(args) -> int:
    from .dubbing import DubOptions, dub

    _check_out(args.out, args.force)
    opt = DubOptions(ref_frame=args.ref_frame, no_fusion=args.no_fusion,
                     force=args.force)
    result = dub(args.video, args.audio, args.base_ckpt, args.out,
                 hr_ckpt=args.hr_ckpt, options=opt)
    _write_snapshot(Path(str(args.out) + ".config.json"), _resolved(args))
    print(f"dubbed video: {result}")
    return 0


def _cmd_eval(args) -> int:
    from .metrics import evaluate

    _check_out(args.out, args.force)
    report = evaluate(args.gen, args.gt, args.audio, args.sync_ckpt,
                      out=args.out)
    _write_snapshot(Path(str(args.out) + ".config.json"), _resolved(args))
    print(json.dumps(report, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hyperlips",
                     description="Two-stage audio-driven talking face pipeline")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("make-toy-data", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--clips", type=int, default=8)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--frames", type=int, default=64,
                   help="frames per clip (25 fps)")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=_cmd_make_toy_data)

    p = sub.add_parser("train-sync", help="train the audio-visual sync expert")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="run directory")
    _add_train_flags(p)
    p.set_defaults(func=_cmd_train_sync)

    p = sub.add_parser("train-base", help="train the stage-1 base generator")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--sync-ckpt", required=True, dest="sync_ckpt")
    _add_train_flags(p)
    p.set_defaults(func=_cmd_train_base)

    p = sub.add_parser("build-stage2",
                       help="run stage 1 over a dataset to build stage-2 pairs")
    p.add_argument("--base-ckpt", required=True, dest="base_ckpt")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=int, choices=[1, 2, 4], default=1)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=_cmd_build_stage2)

    p = sub.add_parser("train-hr", help="train the stage-2 HR decoder")
    p.add_argument("--data", required=True, help="stage-2 dataset directory")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--scale", type=int, choices=[1, 2, 4], default=1)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_train_hr)

    p = sub.add_parser("dub", help="dub a video with new audio")
    p.add_argument("--video", required=True)
    p.add_argument("--audio", required=True)
    p.add_argument("--base-ckpt", required=True, dest="base_ckpt")
    p.add_argument("--hr-ckpt", dest="hr_ckpt")
    p.add_argument("--ref-frame", type=int, dest="ref_frame")
    p.add_argument("--no-fusion", action="store_true", dest="no_fusion")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=_cmd_dub)

    p = sub.add_parser("eval", help="evaluate a dubbed video against truth")
    p.add_argument("--gen", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--audio", required=True)
    p.add_argument("--sync-ckpt", required=True, dest="sync_ckpt")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=_cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    cache = os.environ.get("HLIPS_CACHE_DIR")
    if cache:
        os.environ.setdefault("TORCH_HOME", cache)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except HyperLipsError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # runtime failures outside our error taxonomy
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
