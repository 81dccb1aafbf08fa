"""Command-line entry point.

Exit status: 0 success, 1 infeasible scenario, 2 usage or configuration
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from ..benchmarks import RESULT_COLUMNS, BenchmarkId, run_benchmark
from ..channel import dump_channels, scenario
from ..scenario import ConfigError, ScenarioInfeasible, SystemParams, params_from_mapping, parse_config, tomllib
from ..solvers import (BcdSettings, RecoverableError, init_point, load_settings, repair_powers_after_rounding,
                       round_subcarriers, solve_p2)
from .oracle import oracle_p2_grid
from .report import emit_csv, plot_summary, plot_traces, sibling
from .sweep import (ROW_COLUMNS, SUMMARY_COLUMNS, TRACE_COLUMNS, SweepSpec, convergence_trace, mean_trace,
                    run_sweep, summarize)

EXIT_OK, EXIT_INFEASIBLE, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

SOLVE_TRACE_COLUMNS = ("benchmark", "iteration", "objective_J", "subcarrier", "split", "phase")
ORACLE_COLUMNS = ("seed", "relaxed_J", "rounded_J", "oracle_J", "rounded_over_oracle")
CAPACITY_DEFAULT = "LocalOnly,CompCollab,CommCollab,Proposed"


class UsageError(Exception):
    pass


def _csv_list(text, conv=str):
    items = [x.strip() for x in str(text).split(",") if x.strip()]
    if not items:
        raise UsageError(f"empty list: {text!r}")
    try:
        return [conv(x) for x in items]
    except ValueError:
        raise UsageError(f"bad list entry in {text!r}") from None


def _number(x):
    v = float(x)
    return int(v) if v.is_integer() and "." not in x and "e" not in x.lower() else v


def _seeds(args, default):
    if getattr(args, "seeds", None):
        vals = _csv_list(args.seeds, int)
        return list(range(vals[0])) if len(vals) == 1 else vals
    if getattr(args, "seed", None) is not None:
        return [args.seed]
    return list(range(default))


def _benchmarks(text):
    try:
        return [BenchmarkId.parse(b) for b in _csv_list(text)]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load(args):
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = parse_config(fh.read())
    params = params_from_mapping(doc) if doc else SystemParams()
    for item in args.set or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            value = tomllib.loads(f"v = {raw}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw
        params = params_from_mapping({key.strip(): value}, params)
    settings = load_settings(doc) if doc else BcdSettings()
    if args.max_outer is not None:
        settings = replace(settings, max_outer=args.max_outer)
    if args.epsilon is not None:
        settings = replace(settings, epsilon=args.epsilon)
    return params, settings


def _trace_rows(bench, res):
    if res.state is None:
        return [dict(benchmark=bench.value, iteration=0, objective_J=res.objective)]
    by_iter = {}
    for e in res.state.log:
        by_iter.setdefault(e["iteration"], {})[e["block"]] = e["status"] + ("" if e["accepted"] else "/kept")
    return [dict(benchmark=bench.value, iteration=i, objective_J=obj, **by_iter.get(i, {}))
            for i, obj in enumerate(res.state.trace)]


def cmd_solve(args):
    params, settings = _load(args)
    if args.seed is not None:
        params = params.replace(seed=args.seed)
    _, channels = scenario(params)
    rows, traces = [], []
    for bench in _benchmarks(args.benchmarks):
        res = run_benchmark(bench, params, channels, settings)
        rows.append(res.row(params))
        traces.extend(_trace_rows(bench, res))
    emit_csv(rows, args.out, RESULT_COLUMNS)
    trace_path = args.trace or (sibling(args.out, "_trace.csv") if args.out not in (None, "-") else None)
    if trace_path:
        emit_csv(traces, trace_path, SOLVE_TRACE_COLUMNS)
    return EXIT_OK


def _write_sweep(rows, args):
    emit_csv(rows, args.out, ROW_COLUMNS)
    summary = summarize(rows)
    if args.out not in (None, "-"):
        emit_csv(summary, sibling(args.out, "_summary.csv"), SUMMARY_COLUMNS)
        if args.plot:
            plot_summary(summary, sibling(args.out, ".png"))
    elif args.plot:
        raise UsageError("--plot needs --out FILE")


def cmd_sweep(args):
    params, settings = _load(args)
    values = _csv_list(args.values, _number)
    spec = SweepSpec(args.param, tuple(values), tuple(_benchmarks(args.benchmarks)), tuple(_seeds(args, 20)),
                     args.out, args.metric)
    _write_sweep(run_sweep(spec, params, settings), args)
    return EXIT_OK


def cmd_capacity(args):
    params, settings = _load(args)
    values = _csv_list(args.values, float)
    spec = SweepSpec("T", tuple(values), tuple(_benchmarks(args.benchmarks)), tuple(_seeds(args, 20)),
                     args.out, "capacity")
    _write_sweep(run_sweep(spec, params, settings), args)
    return EXIT_OK


def cmd_converge(args):
    params, settings = _load(args)
    M_list = _csv_list(args.values, int)
    rows = convergence_trace(params, _seeds(args, 20), M_list, settings)
    emit_csv(rows, args.out, TRACE_COLUMNS)
    if args.plot:
        if args.out in (None, "-"):
            raise UsageError("--plot needs --out FILE")
        plot_traces(mean_trace(rows), sibling(args.out, ".png"))
    return EXIT_OK


def tiny_oracle_row(params, seed, levels=200):
    """Relaxed, rounded+repaired and brute-force transmit energies on one tiny instance."""
    p = params.replace(seed=seed)
    _, channels = scenario(p)
    alloc = init_point(p, channels)
    rel = solve_p2(p, channels, alloc)
    A, B = round_subcarriers(rel.A, rel.B)
    try:
        _, rounded = repair_powers_after_rounding(p, channels, A, B, alloc)
    except RecoverableError:
        # rounded shares cannot carry the split; the driver keeps the previous assignment
        _, rounded = repair_powers_after_rounding(p, channels, alloc.A, alloc.B, alloc)
    ref = oracle_p2_grid(p, channels, alloc, levels)
    return dict(seed=seed, relaxed_J=rel.objective, rounded_J=rounded, oracle_J=ref.energy,
                rounded_over_oracle=rounded / ref.energy if ref.energy > 0 else float("nan"))


def cmd_oracle(args):
    params, _ = _load(args)
    if params.K > 2 or params.N > 2:
        params = params.replace(K=min(params.K, 2), N=min(params.N, 2))
    rows = [tiny_oracle_row(params, s, args.levels) for s in _seeds(args, 1)]
    emit_csv(rows, args.out, ORACLE_COLUMNS)
    return EXIT_OK


def cmd_dump_channels(args):
    params, _ = _load(args)
    if args.seed is not None:
        params = params.replace(seed=args.seed)
    _, channels = scenario(params)
    text = dump_channels(channels)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="rmsmec", description="Energy minimization for relay/RMS assisted "
                                 "multi-tier computing: solver runs, sweeps and oracles.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seeds=False):
        p.add_argument("--config", help="TOML scenario file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one scenario field")
        p.add_argument("--max-outer", type=int, help="outer iteration cap")
        p.add_argument("--epsilon", type=float, help="fractional-decrease stopping threshold")
        p.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")
        p.add_argument("--seed", type=int, help="single seed")
        if seeds:
            p.add_argument("--seeds", help="seed count N (seeds 0..N-1) or comma list")
        return p

    p = common(sub.add_parser("solve", help="run benchmarks on one scenario"))
    p.add_argument("--benchmarks", default="Proposed")
    p.add_argument("--trace", help="trace CSV path (default: next to --out)")
    p.set_defaults(fn=cmd_solve)

    p = common(sub.add_parser("sweep", help="sweep one parameter over seeds and benchmarks"), seeds=True)
    p.add_argument("--param", required=True, choices=("T", "D", "M", "K", "iterations"))
    p.add_argument("--values", required=True, help="comma list")
    p.add_argument("--benchmarks", default=",".join(b.value for b in BenchmarkId))
    p.add_argument("--metric", default="energy", choices=("energy", "capacity"))
    p.add_argument("--plot", action="store_true", help="also render a PNG next to the CSV")
    p.set_defaults(fn=cmd_sweep)

    p = common(sub.add_parser("converge", help="objective per outer iteration for several M"), seeds=True)
    p.add_argument("--values", default="16,25,36,49", help="comma list of M")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(fn=cmd_converge)

    p = common(sub.add_parser("capacity", help="largest common demand against T"), seeds=True)
    p.add_argument("--values", default="0.5,1,1.5,2", help="comma list of T")
    p.add_argument("--benchmarks", default=CAPACITY_DEFAULT)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(fn=cmd_capacity)

    p = common(sub.add_parser("oracle", help="tiny-instance subcarrier/power check against brute force"),
               seeds=True)
    p.add_argument("--levels", type=int, default=200)
    p.set_defaults(fn=cmd_oracle)

    p = common(sub.add_parser("dump-channels", help="write one scenario's channels as CSV"))
    p.set_defaults(fn=cmd_dump_channels)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.fn(args)
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioInfeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
