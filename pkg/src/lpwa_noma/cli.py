"""Command-line entry point: ``lpwa-noma run|validate|recipes``."""

from __future__ import annotations

import argparse
import logging
import sys

from .airtime import ConfigError
from .harness import (CSV_COLUMNS, load_experiment, recipe, run_experiment, run_trial, save_allocation,
                      scenario_for, trial_seed, validate_dump, write_schedule_dump)


def _densities(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lpwa-noma", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log allocator warnings")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a key = value file")
    run.add_argument("spec", help="experiment file")
    _common(run)
    run.add_argument("--dump-schedule", metavar="CSV",
                     help="write the per-node, per-slot schedule of the first trial")
    run.add_argument("--dump-allocation", metavar="NPZ",
                     help="write the first trial's allocation for 'validate'")

    val = sub.add_parser("validate", help="check an allocation dump against the constraints")
    val.add_argument("dump", help=".npz file written by 'run --dump-allocation'")

    rec = sub.add_parser("recipes", help="run one of the built-in figure experiments")
    rec.add_argument("name", choices=("fig1a", "fig1b", "fig1c"))
    _common(rec)
    rec.add_argument("--densities", type=_densities, help="comma-separated nodes/km²")
    rec.add_argument("--list", action="store_true", help="print the configurations and exit")
    return ap


def _common(p):
    p.add_argument("-o", "--output", help="CSV output path (overrides the file)")
    p.add_argument("--trials", type=int, help="trials per density point")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--seed-base", type=int, help="base of the derived trial seeds")


def _override(spec, args):
    kw = {k: v for k, v in (("output", args.output), ("trials", args.trials), ("workers", args.workers),
                            ("seed_base", args.seed_base)) if v is not None}
    if getattr(args, "densities", None):
        kw["densities"] = args.densities
    return spec.__class__(**{**spec.__dict__, **kw}) if kw else spec


def _execute(spec, args) -> int:
    report = run_experiment(spec)
    if not spec.output:
        sys.stdout.write(report.csv_text())
    width = max(len(c.label()) for c in spec.configurations)
    for row, (key, x) in zip(report.rows, report.samples.items()):
        density, conf = key
        print(f"{density:8.1f}  {conf.label():<{width}}  {row['mean_sum_rate_bps_hz']:.4f} "
              f"± {row['stderr']:.4f} bit/s/Hz  ({row['trials']} trials)", file=sys.stderr)
    print(f"{len(report.rows)} rows, {report.invalid} invalid trials, {len(report.failures)} failed, "
          f"{report.wall_clock:.1f} s", file=sys.stderr)
    for f in report.failures:
        print(f"trial failure: {f}", file=sys.stderr)
    return 1 if report.invalid else 0


def cmd_run(args) -> int:
    spec = _override(load_experiment(args.spec), args)
    status = 0
    if args.dump_schedule or args.dump_allocation:
        conf = spec.configurations[0]
        cfg = scenario_for(spec.base, conf, spec.densities[0], trial_seed(spec.seed_base, 0, 0),
                           spec.source_overrides)
        result, scenario, alloc = run_trial(cfg, conf, keep=True)
        if args.dump_schedule:
            write_schedule_dump(args.dump_schedule, alloc)
        if args.dump_allocation:
            save_allocation(args.dump_allocation, alloc, scenario)
        status |= not result.valid
    return status | _execute(spec, args)


def cmd_validate(args) -> int:
    report = validate_dump(args.dump)
    print(report.summary())
    for w in report.warnings:
        print(f"warning: {w}")
    return 0 if report.ok else 1


def cmd_recipes(args) -> int:
    spec = _override(recipe(args.name), args)
    if args.list:
        print(",".join(CSV_COLUMNS[1:7]))
        for c in spec.configurations:
            print(",".join([c.eh_source, c.interference, c.toa_mode, c.eh_mode, c.power_mode,
                            "on" if c.noma else "off"]))
        return 0
    return _execute(spec, args)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "validate": cmd_validate, "recipes": cmd_recipes}[args.command]
    try:
        return handler(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
