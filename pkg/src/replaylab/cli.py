"""Command line entry point.

``replaylab run <config.json>`` executes the experiment grid described by
the config and writes results.csv, summary.json, plotdata.csv and the
report figures into the output directory. ``replaylab report <dir>``
rebuilds the aggregate files and figures from an existing results.csv.

Output directory precedence: --out flag, then the REPLAYLAB_OUT
environment variable, then the config's out_dir.

Exit codes: 0 full success, 1 config or usage error, 2 when at least one
grid cell failed (remaining cells still ran).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from .errors import ReplayLabError
from .harness import emit_results, parse_config, read_results_csv, run_grid, summarize

OUT_ENV_VAR = "REPLAYLAB_OUT"

_FILTER_KEYS = {"method", "reg", "regularizer", "budget", "seed"}


def _apply_filters(cfg, filter_spec):
    if not filter_spec:
        return cfg
    updates = {}
    for clause in filter_spec.split(","):
        if "=" not in clause:
            raise ReplayLabError(f"bad --filter clause '{clause}' (expected key=value)")
        key, value = clause.split("=", 1)
        if key not in _FILTER_KEYS:
            raise ReplayLabError(f"unknown --filter key '{key}' (choices: {sorted(_FILTER_KEYS)})")
        updates[key] = value
    if "method" in updates:
        keep = [m for m in cfg.methods if m.value == updates["method"]]
        if not keep:
            raise ReplayLabError(f"--filter method={updates['method']} matches no configured method")
        cfg = dataclasses.replace(cfg, methods=keep)
    reg_value = updates.get("reg", updates.get("regularizer"))
    if reg_value is not None:
        keep = [r for r in cfg.regularizers if r.value == reg_value]
        if not keep:
            raise ReplayLabError(f"--filter reg={reg_value} matches no configured regularizer")
        cfg = dataclasses.replace(cfg, regularizers=keep)
    if "budget" in updates:
        keep = [b for b in cfg.budgets if b == int(updates["budget"])]
        if not keep:
            raise ReplayLabError(f"--filter budget={updates['budget']} matches no configured budget")
        cfg = dataclasses.replace(cfg, budgets=keep)
    if "seed" in updates:
        keep = [s for s in cfg.seeds if s == int(updates["seed"])]
        if not keep:
            raise ReplayLabError(f"--filter seed={updates['seed']} matches no configured seed")
        cfg = dataclasses.replace(cfg, seeds=keep)
    return cfg


def _apply_seed_count(cfg, count):
    if count is None:
        return cfg
    if count < 1:
        raise ReplayLabError("--seeds must be >= 1")
    seeds = list(cfg.seeds[:count])
    next_seed = (max(cfg.seeds) if cfg.seeds else 0) + 1
    while len(seeds) < count:
        seeds.append(next_seed)
        next_seed += 1
    return dataclasses.replace(cfg, seeds=seeds)


def _cmd_run(args):
    cfg, applied_defaults = parse_config(args.config)
    cfg = _apply_seed_count(cfg, args.seeds)
    cfg = _apply_filters(cfg, args.filter)
    out_dir = args.out or os.environ.get(OUT_ENV_VAR) or cfg.out_dir

    print(f"config {args.config} (fingerprint {cfg.fingerprint()})")
    if applied_defaults:
        pairs = ", ".join(f"{k}={v}" for k, v in sorted(applied_defaults.items()))
        print(f"defaults applied: {pairs}")
    records = run_grid(cfg, log=print)
    paths = emit_results(records, out_dir)
    if not args.no_figures:
        from .figures import render_figures
        for path in render_figures(summarize(records), out_dir):
            print(f"wrote {path}")
    for path in paths.values():
        print(f"wrote {path}")
    failures = [r for r in records if r.error is not None]
    if failures:
        print(f"{len(failures)} of {len(records)} cells failed", file=sys.stderr)
        return 2
    return 0


def _cmd_report(args):
    results_path = os.path.join(args.results_dir, "results.csv")
    if not os.path.isfile(results_path):
        raise ReplayLabError(f"no results.csv in {args.results_dir}")
    records = read_results_csv(results_path)
    rows = summarize(records)
    paths = emit_results(records, args.results_dir)
    if not args.no_figures:
        from .figures import render_figures
        for path in render_figures(rows, args.results_dir):
            print(f"wrote {path}")
    print(f"wrote {paths['summary']}")
    print(f"wrote {paths['plotdata']}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="replaylab",
        description="Class-incremental rehearsal experiments with pluggable regularizers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the experiment grid from a JSON config")
    run_p.add_argument("config", help="path to the experiment config (JSON)")
    run_p.add_argument("--out", help="output directory (overrides env and config)")
    run_p.add_argument("--seeds", type=int, default=None,
                       help="use N seeds: the config's first N, extended consecutively if needed")
    run_p.add_argument("--filter", default=None,
                       help="restrict the grid, e.g. method=er,reg=im,budget=5,seed=1")
    run_p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    report_p = sub.add_parser("report", help="rebuild summary, plot data and figures from results.csv")
    report_p.add_argument("results_dir", help="directory containing results.csv")
    report_p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_report(args)
    except ReplayLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
