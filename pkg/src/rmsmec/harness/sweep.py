"""Seeded parameter sweeps over the benchmark schemes."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..benchmarks import RESULT_COLUMNS, BenchmarkId, restriction_of, run_benchmark
from ..channel import scenario
from ..scenario import ConfigError, ScenarioInfeasible, SystemParams
from ..solvers import BcdSettings, capacity_search, run_bcd

SWEEP_PARAMS = ("T", "D", "M", "K", "iterations")
METRICS = ("energy", "capacity")
WORKERS_ENV = "RMSMEC_WORKERS"

ROW_COLUMNS = ("param", "value") + RESULT_COLUMNS + ("bits", "error")
SUMMARY_COLUMNS = ("param", "value", "benchmark", "metric", "n", "n_ok", "mean", "std")
TRACE_COLUMNS = ("M", "seed", "iteration", "objective_J")

# schemes whose capacity search may also try channel-aligned phases
_PHASE_STEERING = {BenchmarkId.Proposed, BenchmarkId.SdrPhase, BenchmarkId.ThreeStage, BenchmarkId.UpperBound,
                   BenchmarkId.CommCollab}


@dataclass(frozen=True)
class SweepSpec:
    param: str
    values: tuple
    benchmarks: tuple = tuple(BenchmarkId)
    seeds: tuple = tuple(range(20))
    out: str | None = None
    metric: str = "energy"

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ConfigError("param", f"must be one of {', '.join(SWEEP_PARAMS)}")
        if self.metric not in METRICS:
            raise ConfigError("metric", f"must be one of {', '.join(METRICS)}")
        if not self.values:
            raise ConfigError("values", "empty value list")
        if not self.seeds:
            raise ConfigError("seeds", "empty seed list")
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "benchmarks", tuple(BenchmarkId(b) for b in self.benchmarks))


def worker_count():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(WORKERS_ENV, f"not an integer: {raw!r}") from None
    return max(n, 1)


def cell_params(base, param, value, seed):
    if param == "iterations":
        return base.replace(seed=seed)
    if param in ("M", "K"):
        value = int(value)
    return base.replace(seed=seed, **{param: value})


def _cell(task):
    """One (value, seed, benchmark) cell; failures become rows, never exceptions."""
    param, value, seed, bench, base, settings, metric = task
    row = dict.fromkeys(ROW_COLUMNS, "")
    row.update(param=param, value=value, benchmark=bench.value, seed=seed)
    try:
        params = cell_params(base, param, value, seed)
        row.update(K=params.K, N=params.N, M=params.M, T=params.T, D=float(np.mean(params.D_arr)))
        st = settings if param != "iterations" else replace(settings, max_outer=int(value))
        _, channels = scenario(params)
        if metric == "capacity":
            restr = restriction_of(bench)
            bits = capacity_search(params, channels, restriction=restr,
                                   local_only=bench is BenchmarkId.LocalOnly,
                                   phase_search=bench in _PHASE_STEERING)
            row.update(bits=bits, feasible=True, objective_J="", iterations="")
        else:
            res = run_benchmark(bench, params, channels, st)
            row.update(objective_J=res.objective, iterations=res.iterations, feasible=res.feasible)
    except ScenarioInfeasible as exc:
        row.update(feasible=False, error=f"infeasible: {exc}")
    except Exception as exc:  # noqa: BLE001 - a failed cell must not stop the sweep
        row.update(feasible=False, error=f"{type(exc).__name__}: {exc}")
    return row


def _tasks(spec, base, settings):
    return [(spec.param, v, s, b, base, settings, spec.metric)
            for v in spec.values for s in spec.seeds for b in spec.benchmarks]


def _map(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves task order, so rows come back in cell-key order
        return list(pool.map(fn, tasks, chunksize=1))


def run_sweep(spec, params_base=None, settings=None, workers=None):
    """All rows of the sweep, ordered by (value, seed, benchmark)."""
    base = params_base or SystemParams()
    st = settings or BcdSettings()
    workers = worker_count() if workers is None else workers
    return _map(_cell, _tasks(spec, base, st), workers)


def summarize(rows):
    """Mean and standard deviation per (param, value, benchmark) over the cells that succeeded."""
    cells = {}
    for r in rows:
        metric = "capacity" if r["bits"] != "" else "energy"
        key = (r["param"], r["value"], r["benchmark"], metric)
        cells.setdefault(key, []).append(r)
    out = []
    for (param, value, bench, metric), group in cells.items():
        col = "bits" if metric == "capacity" else "objective_J"
        vals = np.array([float(r[col]) for r in group if r["feasible"] is True and r[col] != ""])
        out.append(dict(param=param, value=value, benchmark=bench, metric=metric, n=len(group), n_ok=len(vals),
                        mean=float(vals.mean()) if len(vals) else math.nan,
                        std=float(vals.std(ddof=1)) if len(vals) > 1 else 0.0 if len(vals) else math.nan))
    return out


def _trace_task(task):
    M, seed, base, settings = task
    params = base.replace(seed=seed, M=int(M))
    _, channels = scenario(params)
    try:
        _, state = run_bcd(params, channels, settings)
    except ScenarioInfeasible:
        return []
    return [dict(M=int(M), seed=seed, iteration=i, objective_J=obj) for i, obj in enumerate(state.trace)]


def convergence_trace(params, seeds, M_list, settings=None, workers=None):
    """Objective after every outer iteration, one block of rows per (M, seed)."""
    st = settings or BcdSettings()
    workers = worker_count() if workers is None else workers
    tasks = [(M, int(s), params, st) for M in M_list for s in seeds]
    return [row for rows in _map(_trace_task, tasks, workers) for row in rows]


def mean_trace(rows):
    """Seed-averaged trace per M; finished runs hold their last value."""
    by_m = {}
    for r in rows:
        by_m.setdefault(r["M"], {}).setdefault(r["seed"], []).append(r["objective_J"])
    out = {}
    for M, runs in by_m.items():
        L = max(len(t) for t in runs.values())
        padded = np.array([t + [t[-1]] * (L - len(t)) for t in runs.values()])
        out[M] = padded.mean(axis=0)
    return out
