"""Command-line interface.

Subcommands map onto pipeline phases; every configuration leaf is a flag of
the same dotted name (e.g. --model.d 16 --stage2.strategy dfr), optionally
seeded from a JSON config file via --config. Exit codes: 0 success,
2 configuration/usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .config import PipelineConfig, dotted_fields
from .errors import ConfigError, DataError, NumericError
from .pipeline import (
    run_eval,
    run_pipeline,
    run_pretrain,
    run_robustify,
    run_synth,
    run_train_head,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_COMMANDS = {
    "synth": (run_synth, "generate a synthetic dataset CSV and schema"),
    "pretrain": (run_pretrain, "stage-1 masked-reconstruction pre-training"),
    "robustify": (run_robustify, "stage-2 per-feature fine-tuning (jtt/dfr banks)"),
    "train-head": (run_train_head, "train the downstream classifiers"),
    "eval": (run_eval, "evaluate all trained methods and emit reports"),
    "pipeline": (run_pipeline, "run every phase end to end"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tabdro",
        description="Robust self-supervised pre-training for tabular data.",
    )
    parser.add_argument("--version", action="version", version=f"tabdro {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file; flags override its fields")
        for dotted, typ in dotted_fields():
            if typ is bool:
                p.add_argument(f"--{dotted}", metavar="BOOL", default=None)
            else:
                p.add_argument(f"--{dotted}", metavar=typ.__name__.upper(), default=None)
    return parser


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    overrides = {}
    for dotted, _ in dotted_fields():
        value = getattr(args, dotted, None)
        if value is not None:
            overrides[dotted] = value
    cfg.apply_overrides(overrides)
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        runner, _ = _COMMANDS[args.command]
        out = runner(cfg)
        print(f"{args.command}: done, artifacts in {out}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
