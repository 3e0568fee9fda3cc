"""``scgi`` command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 runtime or numeric error,
4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
import warnings

from ..errors import ConfigError, ScgiError
from .config import PRESETS, load_config, parse_config
from .pipeline import replay_frames, run_analytic, run_resolve, run_simulation

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("scgi")


def _key_value(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value configuration file")
    common.add_argument("--preset", choices=sorted(PRESETS), help="start from a named parameter set")
    common.add_argument("--seed", type=int, metavar="U64", help="master RNG seed")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--strict", action="store_true", help="fixed shard order, bit-reproducible output")
    common.add_argument("--set", dest="overrides", type=_key_value, action="append", default=[],
                        metavar="KEY=VALUE", help="override one configuration key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="scgi", description="Ghost imaging and second-order cumulant ghost imaging toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("analytic", parents=[common], help="closed-form GI/SCGI curves and resolution report")
    sub.add_parser("simulate", parents=[common], help="Monte-Carlo frames through the GI/SCGI estimators")
    replay = sub.add_parser("replay", parents=[common], help="run the estimators over recorded frames")
    replay.add_argument("--manifest", required=True, metavar="PATH", help="frame-stack manifest")
    sub.add_parser("resolve", parents=[common], help="Rayleigh distance over a two-point PSF family")
    return parser


def _load(args):
    overrides = dict(args.overrides)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.strict:
        overrides["strict"] = "true"
    optional = args.command == "replay"
    if args.config:
        return load_config(args.config, args.preset, overrides, frames_optional=optional)
    return parse_config("", args.preset, overrides, frames_optional=optional)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if args.command == "analytic":
                report = run_analytic(cfg)
            elif args.command == "simulate":
                report = run_simulation(cfg)
            elif args.command == "replay":
                report = replay_frames(args.manifest, cfg)
            else:
                report = run_resolve(cfg)
        for w in caught:
            log.warning("%s", w.message)
    except ConfigError as exc:
        print(f"scgi: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScgiError as exc:
        print(f"scgi: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"scgi: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for k, v in report.items():
        if not k.startswith(("config.", "file.")):
            print(f"{k} = {v}")
    print(f"wrote {len(report.files)} files to {cfg.out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
