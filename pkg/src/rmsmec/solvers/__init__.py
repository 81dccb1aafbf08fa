from .bcd import BcdSettings, BcdState, capacity_search, load_settings, run_bcd
from .common import FULL, RecoverableError, Restriction
from .init import aligned_phases, init_point, joint_start
from .split import ScaSettings, solve_p3_sca
from .subcarrier import repair_powers_after_rounding, round_subcarriers, solve_p2
from .transmissive import DcSettings, extract_rank_one, rank_gap, solve_p4_dc, solve_p4_sdr

__all__ = [
    "BcdSettings", "BcdState", "capacity_search", "load_settings", "run_bcd", "FULL",
    "RecoverableError", "Restriction", "aligned_phases", "init_point", "joint_start", "ScaSettings", "solve_p3_sca",
    "repair_powers_after_rounding", "round_subcarriers", "solve_p2",
    "DcSettings", "extract_rank_one", "rank_gap", "solve_p4_dc", "solve_p4_sdr",
]
