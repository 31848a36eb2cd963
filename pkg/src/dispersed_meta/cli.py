"""Command line entry point: ``dispersed-meta gen|run|report``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .experiment import (
    CURVE_COLUMNS,
    RESULT_COLUMNS,
    TIMING_COLUMNS,
    ConfigError,
    cmd_gen,
    cmd_run,
    load_config,
)
from .io import DataError, read_csv, write_csv
from .report import format_table, regret_svg, summarize

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3
LOG_ENV = "DISPERSED_META_LOG"
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("dispersed_meta")


def _setup_logging() -> None:
    name = os.environ.get(LOG_ENV, "error").lower()
    level = LOG_LEVELS.get(name)
    logging.basicConfig(level=level or logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    if level is None:
        log.warning("%s=%r not one of %s; using error", LOG_ENV, name, "/".join(LOG_LEVELS))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dispersed-meta", description=__doc__)
    parser.add_argument("command", choices=("gen", "run", "report"))
    parser.add_argument("--config", type=Path, help="flat key = value experiment config")
    parser.add_argument("--data", type=Path, default=Path("data"), help="dataset directory")
    parser.add_argument("--out", type=Path, default=Path("results"), help="results directory")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for evaluation")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


def _gen(args) -> None:
    cfg = load_config(args.config, args.seed)
    cmd_gen(cfg, args.data)
    print(f"wrote {cfg.T_train + cfg.T_test} tasks to {args.data}")


def _run(args) -> None:
    cfg = load_config(args.config, args.seed)
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    rows, curve, timings = cmd_run(cfg, args.data, jobs=args.jobs)
    try:
        args.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {args.out}: {exc}") from exc
    write_csv(args.out / "results.csv", RESULT_COLUMNS, rows)
    write_csv(args.out / "curve.csv", CURVE_COLUMNS, curve)
    write_csv(args.out / "timings.csv", TIMING_COLUMNS, timings)
    print(f"wrote {len(rows)} rows to {args.out / 'results.csv'}")


def _report(args) -> None:
    rows = read_csv(args.out / "results.csv", RESULT_COLUMNS)
    table = format_table(summarize(rows))
    curve_path = args.out / "curve.csv"
    curve = read_csv(curve_path, CURVE_COLUMNS) if curve_path.exists() else []
    if {r["experiment_id"] for r in curve} - {rows[0]["experiment_id"]}:
        raise DataError("curve.csv and results.csv come from different experiments")
    (args.out / "table.txt").write_text(table)
    (args.out / "regret.svg").write_text(regret_svg(curve))
    print(table, end="")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging()
    if args.command in ("gen", "run") and args.config is None:
        print(f"error: {args.command} needs --config", file=sys.stderr)
        return EXIT_CONFIG
    try:
        {"gen": _gen, "run": _run, "report": _report}[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
