"""``gbsm`` command line entry point.

Exit codes: 0 success, 2 configuration error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, parse_config, preset_names
from .runner import SUBCOMMANDS, run

log = logging.getLogger("gbsm")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gbsm", description="Non-stationary massive MIMO channel simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario JSON file or shipped preset name")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--realizations", type=int, help="override realization_count")
        p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
        p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
        p.add_argument("--lenient", action="store_true", help="ignore unknown config keys")
    sub.add_parser("presets", help="list shipped presets")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        print("\n".join(preset_names()))
        return 0
    try:
        cfg = parse_config(args.config, strict=not args.lenient)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.realizations is not None:
            overrides["realization_count"] = args.realizations
        if args.no_figures:
            overrides["outputs.figures"] = False
        if overrides:
            cfg = cfg.with_overrides(overrides)
        if args.workers < 1:
            raise ConfigError(["--workers must be at least 1"])
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return 2
    try:
        manifest = run(cfg, args.command, args.out, workers=args.workers)
    except Exception as exc:  # noqa: BLE001 - reported via exit code
        print(f"error: {exc}", file=sys.stderr)
        return 1
    log.info("%s: %d files in %s (%.2f s)", args.command, len(manifest["outputs"]), args.out, manifest["wall_time_s"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
