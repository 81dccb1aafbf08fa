"""Task split and slot durations with subcarriers, powers and phases fixed.

The CN and MEC frequency caps enter through their first-order expansions at
the current iterate and are re-expanded every inner iteration.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from ..convexcore import OPTIMAL, ConicProgram, SolverSettings, add_cubic_over_square_epigraph, solve
from ..sysmodel import cn_cpu_load, mec_cpu_load, total_objective
from .common import FULL, GHZ, MBIT, check, clean_split, rates_mbps


@dataclass
class ScaSettings:
    max_iters: int = 30
    tol: float = 1e-5
    tighten: float = 0.95
    max_repairs: int = 5
    max_backtracks: int = 12
    solver: SolverSettings = field(default_factory=SolverSettings)


@functools.lru_cache(maxsize=32)
def _split_program(K):
    prog = ConicProgram("split-sca")
    dl, dr, dm = (prog.var(n, K, nonneg=True) for n in ("dl", "dr", "dm"))
    t1, t2, t3, t4 = (prog.var(n, K, nonneg=True) for n in ("t1", "t2", "t3", "t4"))
    ul, ur = prog.var("ul", K, nonneg=True), prog.var("ur", K, nonneg=True)
    par = {n: prog.param(n, K, nonneg=True) for n in
           ("E1", "E2", "E3", "R1", "R2", "R3", "D", "dl_cap", "dr_max", "dm_max",
            "t1_max", "t2_max", "t3_max", "t4_max")}
    Tp = prog.param("T", nonneg=True)
    loc = prog.param("loc", nonneg=True)
    cn = prog.param("cn", nonneg=True)

    prog.minimize(par["E1"] @ t1 + par["E2"] @ t2 + par["E3"] @ t3 + cp.sum(ul) + cp.sum(ur))
    add_cubic_over_square_epigraph(prog, ul, loc, dl, Tp)
    add_cubic_over_square_epigraph(prog, ur, cn, dr, Tp - t1)
    prog.add(dl + dr + dm == par["D"],
             dl <= par["dl_cap"],
             dr <= cp.multiply(par["R1"], t1),
             dm <= cp.multiply(par["R2"], t2),
             dm <= cp.multiply(par["R3"], t3),
             t1 + t2 + t3 + t4 <= Tp,
             dr <= par["dr_max"], dm <= par["dm_max"],
             t1 <= par["t1_max"], t2 <= par["t2_max"], t3 <= par["t3_max"], t4 <= par["t4_max"])
    ar, br, am, bm = (prog.param(n, K, nonneg=True) for n in ("ar", "br", "am", "bm"))
    gr, gm = prog.param("gr"), prog.param("gm")
    prog.add(ar @ dr + br @ t1 <= gr, am @ dm - bm @ t4 <= gm)
    return prog


def _common_values(params, alloc, channels, restriction):
    K = params.K
    T = params.T
    R1, R2, R3 = rates_mbps(alloc, params, channels)
    E1 = (alloc.A * alloc.P1).sum(axis=1)
    E2 = (alloc.A * alloc.P2).sum(axis=1)
    E3 = (alloc.B * alloc.P3).sum(axis=1)
    D = params.D_arr / MBIT
    full_t = np.full(K, T)
    relay_ok = restriction.allow_relay & (R1 > 0)
    mec_ok = restriction.allow_mec & (R2 > 0) & (R3 > 0)
    vals = dict(E1=E1, E2=E2, E3=E3, R1=R1, R2=R2, R3=R3, D=D,
                dl_cap=np.full(K, T * params.f_t_max / params.c_t / MBIT),
                dr_max=np.where(relay_ok, D, 0.0), dm_max=np.where(mec_ok, D, 0.0),
                t1_max=np.where(relay_ok, full_t, 0.0),
                t2_max=np.where(mec_ok, full_t, 0.0), t3_max=np.where(mec_ok, full_t, 0.0),
                t4_max=np.where(mec_ok, full_t, 0.0),
                T=T, loc=params.alpha_t * params.c_t ** 3 * MBIT ** 3,
                cn=params.alpha_r * params.c_r ** 3 * MBIT ** 3)
    return vals


def _to_alloc(alloc, values):
    return alloc.replace(d_l=values["dl"] * MBIT, d_r=values["dr"] * MBIT, d_m=values["dm"] * MBIT,
                         t1=values["t1"], t2=values["t2"], t3=values["t3"], t4=values["t4"])


def _sca_values(params, d_r0, t1_0, d_m0, t4_0, shrink_r, shrink_m):
    T = params.T
    c_r = params.c_r * MBIT / GHZ
    c_m = params.c_m * MBIT / GHZ
    rem = T - t1_0
    ar = c_r / rem
    br = c_r * d_r0 / rem ** 2
    gr = shrink_r * params.f_r_max / GHZ + float(br @ t1_0)
    # an idle MEC leg is expanded at a nominal slot so the slope stays finite
    t4e = np.where((d_m0 <= 0) & (t4_0 < 1e-3 * T), 1e-3 * T, t4_0)
    t4e = np.maximum(t4e, 1e-12)
    am = c_m / t4e
    bm = c_m * d_m0 / t4e ** 2
    gm = shrink_m * params.f_m_max / GHZ - float(np.sum(c_m * d_m0 / t4e))
    return dict(ar=ar, br=br, gr=gr, am=am, bm=bm, gm=gm)


def _caps_ok(params, alloc, rtol=1e-9):
    r_ok = cn_cpu_load(params, alloc.d_r, alloc.t1) <= params.f_r_max * (1 + rtol)
    m_ok = mec_cpu_load(params, alloc.d_m, alloc.t4) <= params.f_m_max * (1 + rtol)
    return r_ok, m_ok


def _backtrack(params, channels, cur, trial, cur_obj, restriction, steps):
    """Largest step cur + 2^-j (trial - cur) that meets the original caps and lowers the objective."""
    fields = ("d_l", "d_r", "d_m", "t1", "t2", "t3", "t4")
    theta = 1.0
    for _ in range(steps):
        theta *= 0.5
        step = cur.replace(**{f: getattr(cur, f) + theta * (getattr(trial, f) - getattr(cur, f)) for f in fields})
        step = clean_split(step, params, channels, restriction)
        if all(_caps_ok(params, step)) and total_objective(step, params) < cur_obj:
            return step
    return None


def solve_p3_sca(params, channels, alloc, sca_settings=None, restriction=FULL):
    """SCA over the task split and slot durations from the feasible iterate ``alloc``.

    Returns ``(allocation, objective, info)``; ``info['trace']`` holds the
    objective after every accepted inner iterate.
    """
    st = sca_settings or ScaSettings()
    K = params.K
    prog = _split_program(K)
    base = _common_values(params, alloc, channels, restriction)
    cur = alloc
    cur_obj = total_objective(cur, params)
    trace = [cur_obj]
    info = dict(trace=trace, solves=0, repairs=0, backtracked=0, status="optimal", first_solve_feasible=None)
    for _ in range(st.max_iters):
        d_r0, t1_0 = cur.d_r / MBIT, cur.t1
        d_m0, t4_0 = cur.d_m / MBIT, cur.t4
        shrink_r = shrink_m = 1.0
        cand = None
        first = None
        for attempt in range(st.max_repairs + 1):
            prog.set(**base, **_sca_values(params, d_r0, t1_0, d_m0, t4_0, shrink_r, shrink_m))
            out = solve(prog, st.solver)
            info["solves"] += 1
            if out.status != OPTIMAL:
                info["status"] = out.status
                break
            trial = clean_split(_to_alloc(cur, out.values), params, channels, restriction)
            first = trial if first is None else first
            r_ok, m_ok = _caps_ok(params, trial)
            if info["first_solve_feasible"] is None:
                info["first_solve_feasible"] = bool(r_ok and m_ok)
            if r_ok and m_ok:
                cand = trial
                break
            info["repairs"] += 1
            shrink_r *= 1.0 if r_ok else st.tighten
            shrink_m *= 1.0 if m_ok else st.tighten
        if (cand is None or total_objective(cand, params) > cur_obj) and first is not None:
            cand = _backtrack(params, channels, cur, first, cur_obj, restriction, st.max_backtracks) or cand
            info["backtracked"] += 1
        if cand is None:
            break
        new_obj = total_objective(cand, params)
        if new_obj > cur_obj + 1e-12 or not check(cand, params, channels, restriction).feasible:
            break
        decrease = (cur_obj - new_obj) / max(cur_obj, 1e-300)
        cur, cur_obj = cand, new_obj
        trace.append(cur_obj)
        if decrease <= st.tol:
            break
    return cur, cur_obj, info

