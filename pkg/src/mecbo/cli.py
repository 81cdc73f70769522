"""Command-line entry point: ``mecbo run | summarize | sweep | oracle-check``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .harness import (
    ConfigError,
    load_config,
    load_preset,
    oracle_check,
    read_records,
    relative_differences,
    run_experiment,
    summarize,
    write_records,
    write_summary,
)
from .harness.config import METHODS
from .harness.summary import final_rows

log = logging.getLogger("mecbo")


def _load(ref: str):
    """A TOML path, or the name of a shipped preset (``a``, ``b``, ``c``)."""
    path = Path(ref)
    if path.is_file():
        return load_config(path)
    if path.suffix or "/" in ref:
        raise ConfigError(f"config file {ref} not found")
    return load_preset(ref)


def _overrides(args) -> dict:
    return {k: getattr(args, k) for k in ("slots", "reps", "seed", "workers") if getattr(args, k) is not None}


def _parse_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _print_finals(summary, out=None):
    out = out or sys.stdout
    for method, row in final_rows(summary).items():
        print(
            f"{method:>24s}  slot {row.slot:4d}  avg regret {row.mean_avg_regret:.6g} "
            f"+- {row.se_avg_regret:.2g}  avg EDC {row.mean_avg_edc:.6g}  ({row.reps} reps)",
            file=out,
        )


def cmd_run(args) -> int:
    cfg = _load(args.config)
    methods = args.method or list(cfg.methods)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for method in methods:
        spec = cfg.spec(method, **_overrides(args))
        log.info("running %s: %d reps x %d slots", method, spec.reps, spec.slots)
        recs = run_experiment(spec)
        write_records(out / f"{method}.csv", recs)
        records.extend(recs)
    _print_finals(summarize(records))
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for text in args.values:
        value = _parse_value(text)
        label = f"{args.method}[{args.param}={text}]"
        spec = cfg.spec(args.method, **_overrides(args), **{args.param: value})
        recs = run_experiment(spec, label=label)
        write_records(out / f"{args.method}_{args.param}={text}.csv", recs)
        records.extend(recs)
    _print_finals(summarize(records))
    return 0


def cmd_summarize(args) -> int:
    src = Path(args.inp)
    files = sorted(src.glob("*.csv")) if src.is_dir() else [src]
    records = []
    for f in files:
        try:
            records.extend(read_records(f))
        except ValueError as exc:  # e.g. a summary file sitting in the same folder
            log.warning("skipping %s: %s", f, exc)
    if not records:
        print(f"no run records found in {src}", file=sys.stderr)
        return 1
    summary = summarize(records)
    write_summary(args.out, summary)
    _print_finals(summary)
    for (a, b), d in sorted(relative_differences(summary).items()):
        print(f"{a} vs {b}: {100.0 * d:+.2f}% avg regret")
    return 0


def cmd_oracle_check(args) -> int:
    cfg = _load(args.config)
    res = oracle_check(cfg.env, slots=args.slots, samples=args.samples, seed=args.seed)
    status = "PASS" if res.passed else "FAIL"
    print(
        f"{status}: {res.slots} slots, worst self-regret {res.worst_self_regret:.3g}, "
        f"worst random-minus-oracle {res.worst_random_gap:.3g}"
    )
    return 0 if res.passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mecbo", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, method_many):
        sp.add_argument("--config", required=True, help="TOML file or preset name (a, b, c)")
        if method_many:
            sp.add_argument("--method", action="append", choices=METHODS, help="repeatable; default: all in config")
        else:
            sp.add_argument("--method", default="tvbo", choices=METHODS)
        sp.add_argument("--slots", type=int)
        sp.add_argument("--reps", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out", default="results")

    run = sub.add_parser("run", help="run methods and write one CSV per method")
    common(run, True)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run one method over values of a parameter")
    common(sweep, False)
    sweep.add_argument("--param", required=True, help="method parameter, e.g. rho")
    sweep.add_argument("--values", nargs="+", required=True)
    sweep.set_defaults(func=cmd_sweep)

    summ = sub.add_parser("summarize", help="aggregate run CSVs into a summary CSV")
    summ.add_argument("--in", dest="inp", required=True, help="directory of run CSVs or a single CSV")
    summ.add_argument("--out", required=True)
    summ.set_defaults(func=cmd_summarize)

    oc = sub.add_parser("oracle-check", help="self-test the regret oracle")
    oc.add_argument("--config", required=True)
    oc.add_argument("--slots", type=int, default=50)
    oc.add_argument("--samples", type=int, default=1000)
    oc.add_argument("--seed", type=int, default=0)
    oc.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
