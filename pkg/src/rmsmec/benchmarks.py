"""The comparison schemes, each a feature-flagged run of the same block solvers."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .scenario import STREAM_RANDOM_PHASE, ScenarioInfeasible, rng_for
from .solvers import BcdSettings, Restriction, init_point, run_bcd
from .solvers.common import check
from .sysmodel import local_only_allocation, local_cpu_ok, total_objective

NO_MEC = Restriction(allow_relay=True, allow_mec=False)
NO_RELAY_COMPUTE = Restriction(allow_relay=False, allow_mec=True)


class BenchmarkId(str, enum.Enum):
    LocalOnly = "LocalOnly"
    CompCollab = "CompCollab"
    CommCollab = "CommCollab"
    RandomPhase = "RandomPhase"
    SdrPhase = "SdrPhase"
    ThreeStage = "ThreeStage"
    UpperBound = "UpperBound"
    Proposed = "Proposed"

    @classmethod
    def parse(cls, name):
        for b in cls:
            if b.value.lower() == str(name).strip().lower():
                return b
        raise ValueError(f"unknown benchmark {name!r}; choose from {', '.join(b.value for b in cls)}")


RESULT_COLUMNS = ("benchmark", "seed", "K", "N", "M", "T", "D", "objective_J", "iterations", "feasible")


@dataclass
class BenchmarkResult:
    benchmark: BenchmarkId
    alloc: object
    objective: float
    iterations: int
    feasible: bool
    state: object = None

    def row(self, params):
        return dict(benchmark=self.benchmark.value, seed=params.seed, K=params.K, N=params.N, M=params.M,
                    T=params.T, D=float(np.mean(params.D_arr)), objective_J=self.objective,
                    iterations=self.iterations, feasible=self.feasible)


def restriction_of(bench):
    bench = BenchmarkId(bench)
    if bench is BenchmarkId.CompCollab:
        return NO_MEC
    if bench is BenchmarkId.CommCollab:
        return NO_RELAY_COMPUTE
    if bench is BenchmarkId.LocalOnly:
        return Restriction(allow_relay=False, allow_mec=False)
    return Restriction()


def _bcd(bench, params, channels, settings, init=None):
    alloc, state = run_bcd(params, channels, settings, init)
    return BenchmarkResult(bench, alloc, total_objective(alloc, params), state.iteration, state.feasible, state)


def run_local_only(params, channels=None):
    """Every bit computed on the device; raises ScenarioInfeasible above the CPU cap."""
    if not np.all(local_cpu_ok(params, params.D_arr, rtol=1e-12)):
        raise ScenarioInfeasible("local CPU cannot process the demand within T")
    alloc = local_only_allocation(params)
    feasible = True if channels is None else check(alloc, params, channels, restriction_of("LocalOnly")).feasible
    return BenchmarkResult(BenchmarkId.LocalOnly, alloc, total_objective(alloc, params), 0, feasible)


def run_comp_collab(params, channels, settings=None):
    """Local plus relay computing; the RMS leg is switched off."""
    st = replace(settings or BcdSettings(), restriction=NO_MEC)
    return _bcd(BenchmarkId.CompCollab, params, channels, st)


def run_comm_collab(params, channels, settings=None):
    """Local plus MEC computing; the relay forwards but computes nothing."""
    st = replace(settings or BcdSettings(), restriction=NO_RELAY_COMPUTE)
    return _bcd(BenchmarkId.CommCollab, params, channels, st)


def run_random_phase(params, channels, rng=None, settings=None):
    """Transmissive coefficients frozen at i.i.d. uniform unit-modulus phases."""
    rng = rng_for(params.seed, STREAM_RANDOM_PHASE) if rng is None else rng
    st = replace(settings or BcdSettings(), phase_mode="fixed")
    init = init_point(params, channels, rng=rng, strategy=st.init_strategy, restriction=st.restriction)
    return _bcd(BenchmarkId.RandomPhase, params, channels, st, init)


def run_sdr_phase(params, channels, settings=None):
    """Rank-relaxed coefficient block with Gaussian randomization."""
    st = replace(settings or BcdSettings(), phase_mode="sdr")
    return _bcd(BenchmarkId.SdrPhase, params, channels, st)


def run_three_stage(params, channels, settings=None):
    """One pass over the three blocks from the starting point."""
    st = replace(settings or BcdSettings(), max_outer=1)
    return _bcd(BenchmarkId.ThreeStage, params, channels, st)


def run_upper_bound(params, channels, settings=None):
    """Full alternation with fractional subcarrier shares kept throughout."""
    st = replace(settings or BcdSettings(), relax_shares=True)
    return _bcd(BenchmarkId.UpperBound, params, channels, st)


def run_proposed(params, channels, settings=None):
    return _bcd(BenchmarkId.Proposed, params, channels, settings or BcdSettings())


RUNNERS = {
    BenchmarkId.LocalOnly: lambda p, ch, st: run_local_only(p, ch),
    BenchmarkId.CompCollab: run_comp_collab,
    BenchmarkId.CommCollab: run_comm_collab,
    BenchmarkId.RandomPhase: lambda p, ch, st: run_random_phase(p, ch, settings=st),
    BenchmarkId.SdrPhase: run_sdr_phase,
    BenchmarkId.ThreeStage: run_three_stage,
    BenchmarkId.UpperBound: run_upper_bound,
    BenchmarkId.Proposed: run_proposed,
}


def run_benchmark(bench, params, channels, settings=None):
    return RUNNERS[BenchmarkId(bench)](params, channels, settings)
