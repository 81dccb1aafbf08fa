"""Alternating optimization over the three blocks, and the capacity search built on it."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..convexcore import SolverSettings
from ..scenario import ScenarioInfeasible, parse_config
from ..sysmodel import total_objective
from .common import FULL, RecoverableError, Restriction, check
from .init import aligned_phases, init_point
from .split import ScaSettings, solve_p3_sca
from .subcarrier import SHARE_FLOOR, repair_powers_after_rounding, round_subcarriers, solve_p2
from .transmissive import DcSettings, solve_p4_dc, solve_p4_sdr

ACCEPT_SLACK = 1e-9


@dataclass
class BcdSettings:
    max_outer: int = 50
    epsilon: float | None = None  # None: take params.epsilon
    round_each_iter: bool = True
    relax_shares: bool = False
    phase_mode: str = "dc"  # dc | sdr | fixed
    restriction: Restriction = FULL
    init_strategy: str = "convex"
    sdr_draws: int = 200
    sca: ScaSettings = field(default_factory=ScaSettings)
    dc: DcSettings = field(default_factory=DcSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)


_SETTING_KEYS = {
    "max_outer": int, "epsilon": float, "round_each_iter": bool, "init_strategy": str,
    "sdr_draws": int, "sca_max_iters": int, "sca_tol": float, "sca_tighten": float,
    "sca_max_repairs": int, "sca_max_backtracks": int, "dc_max_iters": int, "dc_eta": float, "dc_mode": str,
    "dc_eps_rank": float, "dc_start": str, "dc_tau_tol": float, "solver": str, "solver_tol": float,
}


def load_settings(config_text_or_doc, base=None):
    """Read the ``[settings]`` table of a scenario document."""
    doc = parse_config(config_text_or_doc) if isinstance(config_text_or_doc, str) else config_text_or_doc
    table = doc.get("settings", {}) or {}
    st = base or BcdSettings()
    sca, dc, solver = st.sca, st.dc, st.solver
    for key, raw in table.items():
        if key not in _SETTING_KEYS:
            from ..scenario import ConfigError
            raise ConfigError(f"settings.{key}", "unknown key")
        val = _SETTING_KEYS[key](raw)
        if key.startswith("sca_"):
            sca = replace(sca, **{key[4:]: val})
        elif key.startswith("dc_"):
            dc = replace(dc, **{key[3:]: val})
        elif key == "solver":
            solver = replace(solver, solver=val.upper())
        elif key == "solver_tol":
            solver = replace(solver, tol_gap=val, tol_feas=val)
        else:
            st = replace(st, **{key: val})
    return replace(st, sca=sca, dc=dc, solver=solver)


@dataclass
class BcdState:
    alloc: object
    iteration: int = 0
    trace: list = field(default_factory=list)
    log: list = field(default_factory=list)
    converged: bool = False
    seconds: float = 0.0
    feasible: bool = True

    @property
    def objective(self):
        return self.trace[-1]

    def record(self, block, status, accepted, objective, seconds, note=""):
        self.log.append(dict(iteration=self.iteration, block=block, status=status, accepted=accepted,
                             objective=objective, seconds=seconds, note=note))

    def trace_csv(self):
        """iteration, objective and per-block status, one row per outer iteration (0 = start)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "objective_J", "subcarrier", "split", "phase"])
        by_iter = {}
        for e in self.log:
            by_iter.setdefault(e["iteration"], {})[e["block"]] = e["status"] + ("" if e["accepted"] else "/kept")
        for i, obj in enumerate(self.trace):
            row = by_iter.get(i, {})
            w.writerow([i, repr(float(obj)), row.get("subcarrier", ""), row.get("split", ""), row.get("phase", "")])
        return buf.getvalue()


class _Driver:
    def __init__(self, params, channels, settings):
        self.params = params
        self.channels = channels
        self.st = settings
        self.restr = settings.restriction

    def accept(self, state, cand, block, status, t0, note=""):
        cur_obj = total_objective(state.alloc, self.params)
        obj = total_objective(cand, self.params)
        ok = obj <= cur_obj + ACCEPT_SLACK and check(cand, self.params, self.channels, self.restr).feasible
        if ok:
            state.alloc = cand
        state.record(block, status, ok, obj if ok else cur_obj, time.perf_counter() - t0, note)
        return ok

    def reject(self, state, block, exc, t0):
        state.record(block, type(exc).__name__, False, total_objective(state.alloc, self.params),
                     time.perf_counter() - t0, str(exc))

    # block 1: subcarriers and powers
    def subcarrier_block(self, state, final=False):
        t0 = time.perf_counter()
        alloc = state.alloc
        try:
            rel = solve_p2(self.params, self.channels, alloc, self.st.solver, self.restr)
        except RecoverableError as exc:
            self.reject(state, "subcarrier", exc, t0)
            return
        binary = (self.st.round_each_iter or final) and not self.st.relax_shares
        candidates = []
        if binary:
            A, B = round_subcarriers(rel.A, rel.B)
            # the two share matrices feed disjoint legs, so mixed pairs are candidates too
            assignments = [(A, B, "rounded"), (alloc.A, alloc.B, "previous"),
                           (A, alloc.B, "rounded-A"), (alloc.A, B, "rounded-B")]
            seen = set()
            unique = []
            for X, Y, tag in assignments:
                key = (X.tobytes(), Y.tobytes())
                if key not in seen:
                    seen.add(key)
                    unique.append((X, Y, tag))
            assignments = unique
        else:
            assignments = [(rel.A, rel.B, "relaxed"), (alloc.A, alloc.B, "previous")]
            candidates.append((self._relaxed_direct(alloc, rel), "relaxed-direct"))
        for A, B, tag in assignments:
            try:
                (P1, P2, P3), _ = repair_powers_after_rounding(self.params, self.channels, A, B, alloc,
                                                               self.st.solver)
            except RecoverableError:
                continue
            A_ = np.where(A > 1e-7, A, 0.0)
            B_ = np.where(B > 1e-7, B, 0.0)
            candidates.append((alloc.replace(A=A_, B=B_, P1=P1, P2=P2, P3=P3), tag))
        candidates = [c for c in candidates if check(c[0], self.params, self.channels, self.restr).feasible]
        if not candidates:
            self.reject(state, "subcarrier", RecoverableError("no feasible power repair"), t0)
            return
        cand, tag = min(candidates, key=lambda c: total_objective(c[0], self.params))
        self.accept(state, cand, "subcarrier", "optimal", t0, tag)

    @staticmethod
    def _relaxed_direct(alloc, rel):
        """Shares and powers straight from the relaxed program, P = p~ / a."""
        A = np.where(rel.A > SHARE_FLOOR, rel.A, 0.0)
        B = np.where(rel.B > SHARE_FLOOR, rel.B, 0.0)
        safeA, safeB = np.where(A > 0, A, 1.0), np.where(B > 0, B, 1.0)
        return alloc.replace(A=A, B=B, P1=np.where(A > 0, rel.P1_tilde / safeA, 0.0),
                             P2=np.where(A > 0, rel.P2_tilde / safeA, 0.0),
                             P3=np.where(B > 0, rel.P3_tilde / safeB, 0.0))

    # block 2: split and slots
    def split_block(self, state):
        t0 = time.perf_counter()
        cand, _, info = solve_p3_sca(self.params, self.channels, state.alloc, self.st.sca, self.restr)
        self.accept(state, cand, "split", info["status"], t0, f"solves={info['solves']} repairs={info['repairs']}")

    # block 3: transmissive coefficients
    def phase_block(self, state):
        if self.st.phase_mode == "fixed" or not self.restr.allow_mec:
            return
        t0 = time.perf_counter()
        try:
            if self.st.phase_mode == "sdr":
                from ..scenario import STREAM_SDR, rng_for
                rng = rng_for(self.params.seed, STREAM_SDR, state.iteration)
                res = solve_p4_sdr(self.params, self.channels, state.alloc, self.st.sdr_draws, rng)
            else:
                res = solve_p4_dc(self.params, self.channels, state.alloc, self.st.dc)
        except RecoverableError as exc:
            self.reject(state, "phase", exc, t0)
            return
        cand = state.alloc.replace(s=res.s)
        self.accept(state, cand, "phase", res.status, t0, f"gap={res.rank_gap:.2e} iters={res.iterations}")


def run_bcd(params, channels, settings=None, init=None):
    """Alternate subcarrier/power, split/slot and transmissive-coefficient updates.

    Every block update is kept only if it stays feasible and does not raise the
    objective by more than 1e-9 J, so the trace is non-increasing. Stops when
    the fractional decrease of an outer iteration is at most ``epsilon``.
    Raises ScenarioInfeasible when no starting point exists.
    """
    st = settings or BcdSettings()
    eps = params.epsilon if st.epsilon is None else st.epsilon
    t_start = time.perf_counter()
    if init is None:
        init = init_point(params, channels, strategy=st.init_strategy, restriction=st.restriction)
    drv = _Driver(params, channels, st)
    state = BcdState(init)
    state.trace.append(total_objective(init, params))
    for i in range(1, st.max_outer + 1):
        state.iteration = i
        drv.subcarrier_block(state)
        drv.split_block(state)
        drv.phase_block(state)
        prev, cur = state.trace[-1], total_objective(state.alloc, params)
        state.trace.append(cur)
        decrease = (prev - cur) / prev if prev > 0 else 0.0
        if decrease <= eps:
            state.converged = True
            break
    if not st.round_each_iter and not st.relax_shares:
        state.iteration += 1
        drv.subcarrier_block(state, final=True)
        state.trace.append(total_objective(state.alloc, params))
    state.seconds = time.perf_counter() - t_start
    state.feasible = check(state.alloc, params, channels, st.restriction).feasible
    return state.alloc, state


def capacity_upper(params, restriction=FULL, T=None):
    T = params.T if T is None else T
    cap = T * params.f_t_max / params.c_t
    if restriction.allow_relay:
        cap += T * params.f_r_max / params.c_r / params.K
    if restriction.allow_mec:
        cap += T * params.f_m_max / params.c_m / params.K
    return cap


def _demand_feasible(params, channels, D, restriction, phase_search):
    p = params.replace(D=D)
    tries = [None]
    if phase_search and restriction.allow_mec:
        tries.append(aligned_phases(channels))
    for phases in tries:
        try:
            init_point(p, channels, restriction=restriction, phases=phases)
        except ScenarioInfeasible:
            continue
        return True
    return False


def capacity_search(params, channels, T=None, restriction=FULL, local_only=False, rel_tol=1e-2,
                    verify=False, settings=None, phase_search=True):
    """Largest uniform per-user demand (bits) a scheme can serve within ``T``.

    Local computing alone is capped at exactly T f_t / c_t. Otherwise bisection
    runs between that value and the per-user server bound; a demand counts as
    feasible when a starting point exists, which the safeguarded alternating
    optimization keeps feasible. Schemes that steer the transmissive
    coefficients (``phase_search``) may also start from channel-aligned phases.
    ``verify`` runs the full optimization at the returned value and checks its
    output.
    """
    params = params if T is None else params.replace(T=T)
    lo = params.T * params.f_t_max / params.c_t
    if local_only or not (restriction.allow_relay or restriction.allow_mec):
        return lo
    hi = capacity_upper(params, restriction)
    if _demand_feasible(params, channels, hi, restriction, phase_search):
        lo = hi
    while (hi - lo) > rel_tol * lo:
        mid = 0.5 * (lo + hi)
        if _demand_feasible(params, channels, mid, restriction, phase_search):
            lo = mid
        else:
            hi = mid
    if verify:
        st = replace(settings or BcdSettings(), restriction=restriction)
        init = None
        try:
            init = init_point(params.replace(D=lo), channels, restriction=restriction)
        except ScenarioInfeasible:
            init = init_point(params.replace(D=lo), channels, restriction=restriction,
                              phases=aligned_phases(channels))
        alloc, state = run_bcd(params.replace(D=lo), channels, st, init)
        if not state.feasible:
            raise RuntimeError("capacity point failed the feasibility check after optimization")
    return lo
