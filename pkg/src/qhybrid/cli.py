"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from .data import synth_dataset, write_dataset
from .experiment import ExperimentConfig, RunConfig, load_config, load_report, render_table, run_experiment
from .train import train_one_run

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("qhybrid")


class ConfigError(Exception):
    pass


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<config>"
        lines.append(f"{loc}: {err['msg']}")
    return "\n".join(lines)


def _load(path: str, model):
    try:
        return load_config(path, model)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    except ValidationError as exc:
        raise ConfigError(f"invalid config {path}:\n{_format_validation(exc)}") from exc


def cmd_train(args) -> int:
    cfg = _load(args.config, RunConfig)
    data = cfg.load_data()
    spec = cfg.architectures()[cfg.train.architecture]
    result = train_one_run(spec, data, cfg.train)
    json_path, csv_path = result.write(cfg.output_dir)
    print(f"test accuracy {result.test_accuracy:.4f}, AUROC {result.test_auroc}")
    print(f"wrote {json_path} and {csv_path}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _load(args.config, ExperimentConfig)
    report = run_experiment(cfg)
    print(render_table(report))
    print(f"wrote report to {cfg.output_dir}")
    return EXIT_OK


def cmd_report(args) -> int:
    report = load_report(args.dir)
    print(render_table(report))
    if args.out:
        from .experiment import write_report

        write_report(report, args.out)
    return EXIT_OK


def cmd_synth_data(args) -> int:
    splits = synth_dataset(args.n, args.size, args.seed)
    write_dataset(splits, args.out)
    print(f"wrote {sum(len(s) for s in splits)} images to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qhybrid", description="Classical vs hybrid quantum CNN experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and evaluate a single run")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("experiment", help="run the multi-round comparison")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="rebuild the comparison report from run files")
    p.add_argument("--dir", required=True)
    p.add_argument("--out", help="also write report files to this directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth-data", help="write the synthetic dataset as PNG files")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=100, help="images per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=32)
    p.set_defaults(func=cmd_synth_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
