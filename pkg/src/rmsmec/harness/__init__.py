from .oracle import oracle_p2_grid, scalar_coefficient_closed_form, waterfill_min_power
from .report import emit_csv
from .sweep import SweepSpec, convergence_trace, run_sweep, summarize

__all__ = ["oracle_p2_grid", "scalar_coefficient_closed_form", "waterfill_min_power", "emit_csv", "SweepSpec",
           "convergence_trace", "run_sweep", "summarize"]
