"""Command-line entry point.

Subcommands: ``run`` a scenario (built-in name or file), ``sweep`` a gamma
grid, ``paper-scenario`` to inspect the built-in reference set, ``validate``
to run the invariant suite.  Exit codes: 0 success, 1 infeasible or unknown
configuration, 2 divergence or envelope breach during a run.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import metrics
from .engine import run, sweep, write_events_csv, write_trace_csv
from .errors import ConfigError
from .scenarios import (
    BUILTIN_NAMES,
    builtin_configs,
    dump_config,
    list_builtins,
    parse_gamma_grid,
    resolve_configs,
    scenario_from_config,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

OUT_DIR_ENV = "ETCSIM_OUT_DIR"


def _out_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUT_DIR_ENV, "out"))


def _cmd_run(args) -> int:
    try:
        cfgs = resolve_configs(args.scenario)
        scenarios = [scenario_from_config(c) for c in cfgs]
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    rc = EXIT_OK
    for sc in scenarios:
        if args.seed is not None:
            sc = replace(sc, seed=args.seed)
        trace = run(sc)
        dest = _out_dir(args) / sc.slug
        dest.mkdir(parents=True, exist_ok=True)
        if not args.summary_only:
            write_trace_csv(trace, dest / "trace.csv")
            write_events_csv(trace, dest / "events.csv")
        summary = metrics.build_summary(trace)
        metrics.write_summary_json(summary, dest / "summary.json")
        rate = summary["rate"]["r_s"]
        rate_txt = f"{rate:.3f}" if rate is not None else "n/a"
        print(
            f"[{sc.slug}] seed={sc.seed} sends={summary['sends']} "
            f"receptions={summary['receptions']} R_s={rate_txt} bits/s "
            f"violations={summary['envelopes']['violations']} -> {dest}"
        )
        if trace.aborted:
            print(f"[{sc.slug}] aborted: {trace.aborted}", file=sys.stderr)
            rc = EXIT_RUNTIME
    return rc


def _grid_from(args, cfg: dict) -> list[float]:
    if args.gammas:
        return parse_gamma_grid(args.gammas)
    sw = cfg.get("sweep")
    if sw and {"gamma_start", "gamma_stop", "gamma_count"} <= set(sw):
        return parse_gamma_grid(
            f"{sw['gamma_start']}:{sw['gamma_stop']}:{sw['gamma_count']}"
        )
    raise ConfigError("no gamma grid: pass --gammas or add a sweep block to the scenario")


def _cmd_sweep(args) -> int:
    try:
        cfgs = resolve_configs(args.scenario)
        base = cfgs[0]
        if len(cfgs) > 1:
            print(
                f"note: scenario has {len(cfgs)} variants; sweeping the first",
                file=sys.stderr,
            )
        grid = _grid_from(args, base)
        seeds = args.seeds if args.seeds is not None else int(
            base.get("sweep", {}).get("seeds", 5)
        )
        results = sweep(base, grid, seeds, jobs=args.jobs)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    for res in results:
        if res.skipped:
            print(
                f"warning: gamma={res.gamma_requested:.6g} skipped: {res.error}",
                file=sys.stderr,
            )
    rows = metrics.sweep_rows(results)
    if not rows:
        print("error: every grid point was infeasible", file=sys.stderr)
        return EXIT_CONFIG
    dest = _out_dir(args)
    dest.mkdir(parents=True, exist_ok=True)
    slug = base["name"].replace("/", "-")
    path = dest / f"{slug}-sweep.csv"
    metrics.write_sweep_csv(rows, path)
    print(f"[{slug}] {len(rows)} grid points ({seeds} seeds each) -> {path}")
    return EXIT_OK


def _cmd_paper_scenario(args) -> int:
    try:
        entries = list_builtins()
        if args.name:
            entries = [e for e in entries if e["name"] == args.name]
            if not entries:
                known = ", ".join(BUILTIN_NAMES)
                raise ConfigError(f"unknown scenario {args.name!r}; built-ins: {known}")
        for entry in entries:
            print(entry["name"])
            for table in entry["variants"]:
                pad = max(len(k) for k in table)
                for k, v in table.items():
                    print(f"  {k:<{pad}}  {v}")
                print()
            if args.write_config:
                dest = Path(args.write_config)
                dest.mkdir(parents=True, exist_ok=True)
                for cfg in builtin_configs(entry["name"]):
                    variant = cfg.get("variant")
                    fname = entry["name"].replace("/", "-") + (
                        f"-{variant}" if variant else ""
                    )
                    (dest / f"{fname}.yaml").write_text(dump_config(cfg))
                    print(f"wrote {dest / (fname + '.yaml')}")
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def _cmd_validate(args) -> int:
    from .validate import run_all

    results = run_all()
    failed = 0
    for res in results:
        tag = "PASS" if res.ok else "FAIL"
        print(f"[{tag}] {res.name}: {res.detail}")
        failed += 0 if res.ok else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="etcsim",
        description="Event-triggered stabilization over delay-bounded digital channels",
    )
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="run a scenario and write trace/events/summary")
    pr.add_argument("--scenario", required=True, help="built-in name or YAML path")
    pr.add_argument("--out", help=f"output directory (default ${OUT_DIR_ENV} or ./out)")
    pr.add_argument("--seed", type=int, help="override the scenario seed")
    pr.add_argument(
        "--summary-only", action="store_true", help="skip trace/events CSVs"
    )
    pr.set_defaults(fn=_cmd_run)

    ps = sub.add_parser("sweep", help="run a gamma grid and write the aggregate CSV")
    ps.add_argument("--scenario", required=True, help="built-in name or YAML path")
    ps.add_argument("--gammas", help="grid start:stop:count or comma list (seconds)")
    ps.add_argument("--seeds", type=int, help="independent runs per grid point")
    ps.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    ps.add_argument("--out", help=f"output directory (default ${OUT_DIR_ENV} or ./out)")
    ps.set_defaults(fn=_cmd_sweep)

    pp = sub.add_parser("paper-scenario", help="list the built-in reference scenarios")
    pp.add_argument("--name", help="show a single built-in")
    pp.add_argument("--write-config", help="directory to write the YAML files to")
    pp.set_defaults(fn=_cmd_paper_scenario)

    pv = sub.add_parser("validate", help="run the invariant suite")
    pv.set_defaults(fn=_cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
