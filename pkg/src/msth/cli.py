"""Command line entry point.

    msth run --config F [--set key=value ...]
    msth ablate --config F --matrix M [--replicates N] [--workers N]
    msth report --in DIR
    msth selftest

Exit codes: 0 ok, 2 config error, 3 dataset error, 4 run failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .data import DatasetError
from .harness import ablate, expand_matrix, report, run
from .numerics import MSTHError

EXIT_OK, EXIT_CONFIG, EXIT_DATASET, EXIT_FAILURE = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msth", description="Multi-scale homeostatic regulation experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--config", type=Path)
    r.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")

    a = sub.add_parser("ablate", help="run an ablation matrix")
    a.add_argument("--config", type=Path)
    a.add_argument("--matrix", type=Path, required=True)
    a.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    a.add_argument("--replicates", type=int, default=20)
    a.add_argument("--workers", type=int, default=1)

    rep = sub.add_parser("report", help="aggregate run summaries into a comparison table")
    rep.add_argument("--in", dest="in_dir", type=Path, required=True)

    sub.add_parser("selftest", help="run the built-in invariant checks")
    return p


def _print_rows(rows) -> None:
    for r in rows:
        print(json.dumps(r, sort_keys=True))


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            spec = load_config(args.config, args.overrides)
            summary = run(spec)
            print(json.dumps(summary.to_dict(include_timing=True), indent=2, sort_keys=True))
            if summary.failure_flag and not spec.perturbations:
                return EXIT_FAILURE
        elif args.command == "ablate":
            spec = load_config(args.config, args.overrides)
            try:
                matrix = expand_matrix(args.matrix.read_text())
            except OSError as exc:
                raise ConfigError(f"cannot read matrix {args.matrix}: {exc}") from exc
            if not matrix:
                raise ConfigError("ablation matrix is empty")
            _print_rows(ablate(spec, matrix, replicates=args.replicates, workers=args.workers))
        elif args.command == "report":
            _print_rows(report(args.in_dir))
        elif args.command == "selftest":
            from .selftest import run_selftest

            return EXIT_OK if run_selftest() else EXIT_FAILURE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except MSTHError as exc:
        if exc.code in ("invalid-config", "empty-matrix", "shape-mismatch"):
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if exc.code == "empty-report":
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raise
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
