"""Command-line entry point: preprocess / tune / run / compare subcommands.

Exit codes: 0 success, 2 config error, 3 data error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import DataError
from .experiment import (
    ConfigError,
    DeskScale,
    ExperimentConfig,
    compare,
    comparison_text,
    load_cached_dataset,
    preprocess,
    run_experiment,
    tune_strategy,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="path to the experiment config JSON")
    sub.add_argument("--seed", type=int, default=None, help="override the master seed")
    sub.add_argument("--out-dir", default=None, help="override the output directory")
    sub.add_argument(
        "--desk-scale",
        action="store_true",
        help="subsample large classes so the run finishes at desk scale",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaforest",
        description="Imbalance-aware random-forest experiment runner for flow CSVs",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("preprocess", "clean, merge and prune the input CSVs into a cached dataset"),
        ("tune", "cross-validate the sampling-strategy grid and report the winner"),
        ("run", "run the full split/sample/fit/test experiment"),
        ("compare", "run every configured sampler and tabulate the comparison"),
    ):
        _add_common(subs.add_parser(name, help=help_text))
    return parser


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig.from_json_file(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out_dir is not None:
        config.output_dir = args.out_dir
    if args.desk_scale and config.desk_scale is None:
        config.desk_scale = DeskScale()
    return config


def _dataset(config: ExperimentConfig):
    ds = load_cached_dataset(config.output_dir)
    if ds is not None:
        return ds
    return preprocess(config)[0]


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        if args.command == "preprocess":
            _, report = preprocess(config)
            sys.stdout.write(report.to_text())
        elif args.command == "tune":
            _, log = tune_strategy(config, _dataset(config))
            out = Path(config.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            (out / "tuning.json").write_text(
                json.dumps(log, sort_keys=True, indent=2) + "\n", encoding="utf-8"
            )
            sys.stdout.write(f"chosen strategy: {json.dumps(log['chosen'], sort_keys=True)}\n")
        elif args.command == "run":
            report = run_experiment(config)
            sys.stdout.write(report.to_text())
        else:
            result = compare(config)
            sys.stdout.write(comparison_text(result))
        return EXIT_OK
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        sys.stderr.write(f"runtime failure: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
