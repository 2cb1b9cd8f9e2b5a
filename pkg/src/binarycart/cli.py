"""Command line entry point: ``cart <subcommand> --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import KINDS, ConfigError, ExperimentConfig, run_experiment, write_outputs
from .oracle import OracleCapError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAP = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cart", description="Greedy trees on sparse binary problems.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", required=True, help="JSON experiment description")
        p.add_argument("--out", required=True, help="directory for rows.csv and summary.json")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for replicates")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg = ExperimentConfig.from_dict(raw, kind=args.command, seed=args.seed)
        rows, summary = run_experiment(cfg, threads=args.threads)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleCapError as exc:
        print(f"oracle cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    write_outputs(cfg.kind, rows, summary, args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
