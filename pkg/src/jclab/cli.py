"""Command-line entry point: ``jclab sweep|table|verify|plot``.

Exit status is 0 on success, 1 when a check or invariant fails and 2 for an
unusable configuration.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config

log = logging.getLogger("jclab")

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2


def _load(ref: str) -> ExperimentConfig:
    """A config path, or the name of a bundled experiment such as ``fig1a``."""
    path = Path(ref)
    if path.exists():
        return load_config(path)
    from .acceptance import CANNED, canned_config

    if ref in CANNED:
        return canned_config(ref)
    raise ConfigError(f"no config file {ref!r} and no bundled experiment of that name ({', '.join(CANNED)})")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="YAML config path or bundled experiment name")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--scale", type=float, help="divide ensemble sizes by this factor")
    p.add_argument("--out", help="output directory (default: config outputs.directory or $JCLAB_OUTPUT_DIR)")
    p.add_argument("--no-plot", action="store_true", help="skip the SVG figure")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jclab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_flags(sub.add_parser("sweep", help="run every series of an experiment"))
    _add_run_flags(sub.add_parser("table", help="run a table experiment and write table.csv"))
    p = sub.add_parser("verify", help="run invariant checks (and acceptance criteria at level full)")
    p.add_argument("--level", choices=("fast", "full"), default="fast")
    p.add_argument("--profile", choices=("full", "desk"), default="full",
                   help="ensemble sizes for the acceptance criteria at level full")
    p = sub.add_parser("plot", help="plot sweep CSV files")
    p.add_argument("paths", nargs="+", metavar="PATH", help="one or more CSV files followed by the output SVG")
    p.add_argument("--y", choices=("s_t", "delta_s"), default="s_t")
    return parser


def _print_summary(outcome) -> None:
    for s in outcome.series:
        d = s.to_dict()
        fmt = lambda v, spec: "n/a" if v is None else format(v, spec)
        print(f"{s.series.label:>16}: n={d['n_samples']:<7} angle={fmt(d['slope_angle_deg'], '6.2f')} "
              f"r={fmt(d['pearson_r'], '.3f')} eta={fmt(d['eta_ent'], '.3f')}"
              + (" [flat]" if d["flat_response"] else ""))
    if outcome.out_dir is not None:
        print(f"wrote {len(outcome.files)} files to {outcome.out_dir}")


def _run(args, table: bool) -> int:
    from .runner import run_sweep, run_table

    try:
        cfg = _load(args.config).with_overrides(seed=args.seed, workers=args.workers, scale=args.scale)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if table and cfg.table is None:
        print(f"config error: {cfg.name} has no table block", file=sys.stderr)
        return EXIT_CONFIG
    fn = run_table if table else run_sweep
    try:
        outcome = fn(cfg, out_dir=args.out, plot=False if args.no_plot else None)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except Exception as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    _print_summary(outcome)
    return EXIT_OK


def _verify(args) -> int:
    from .verify import format_report, run_checks

    results = run_checks(args.level, profile=args.profile, echo=print)
    print(format_report(results).splitlines()[-1] if all(r.passed for r in results)
          else "\n".join(format_report(results).splitlines()[-2:]))
    return EXIT_OK if all(r.passed for r in results) else EXIT_INVARIANT


def _plot(args) -> int:
    from .plotting import emit_plot
    from .runner import read_records_csv
    from .stats import summarize

    if len(args.paths) < 2:
        print("plot needs at least one CSV and an output path", file=sys.stderr)
        return EXIT_CONFIG
    *inputs, out = args.paths
    try:
        results = [summarize(Path(p).stem, read_records_csv(p), args.y) for p in inputs]
        emit_plot(results, out)
    except (OSError, ValueError) as exc:
        print(f"plot failed: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    print(f"wrote {out}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "sweep":
        return _run(args, table=False)
    if args.command == "table":
        return _run(args, table=True)
    if args.command == "verify":
        return _verify(args)
    return _plot(args)


if __name__ == "__main__":
    sys.exit(main())
