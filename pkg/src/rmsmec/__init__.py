"""Energy-minimal task offloading over a DF relay and a transmissive-RMS MEC server."""

from .benchmarks import BenchmarkId, run_benchmark
from .channel import ChannelSet, scenario
from .scenario import ConfigError, ScenarioInfeasible, SystemParams, default_paper_params, load_params
from .solvers import BcdSettings, capacity_search, init_point, run_bcd
from .sysmodel import Allocation, check_feasibility, total_objective

__all__ = ["BenchmarkId", "run_benchmark", "ChannelSet", "scenario", "ConfigError", "ScenarioInfeasible",
           "SystemParams", "default_paper_params", "load_params", "BcdSettings", "capacity_search",
           "init_point", "run_bcd", "Allocation", "check_feasibility", "total_objective"]
