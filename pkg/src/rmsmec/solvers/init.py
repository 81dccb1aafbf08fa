"""Starting point of the alternating optimization."""

from __future__ import annotations

import functools
import math

import cvxpy as cp
import numpy as np

from ..convexcore import OPTIMAL, ConicProgram, add_cubic_over_square_epigraph, solve
from ..scenario import STREAM_INIT_PHASE, ScenarioInfeasible, rng_for
from ..sysmodel import LN2, Allocation
from .common import FULL, GHZ, MBIT, RecoverableError, check, clean_split, rates_mbps


def round_robin(K, N):
    """Subcarrier n goes to user n mod K."""
    X = np.zeros((K, N))
    X[np.arange(N) % K, np.arange(N)] = 1.0
    return X


def random_phases(M, rng):
    return np.exp(2j * np.pi * rng.random(M))


def aligned_phases(channels):
    """Unit-modulus phases of the principal eigenvector of sum_n v_n v_n^H."""
    w, Q = np.linalg.eigh(np.sum(channels.V, axis=0))
    return np.exp(1j * np.angle(Q[:, -1]))


def initial_radio(params, rng=None, restriction=FULL, phases=None):
    """Round-robin subcarriers, equal powers and random unit-modulus phases; split left empty."""
    K, N = params.K, params.N
    rng = rng_for(params.seed, STREAM_INIT_PHASE) if rng is None else rng
    A = round_robin(K, N)
    B = A.copy()
    P_tn = A * params.P_t_max / math.ceil(N / K)
    P1 = P_tn.copy() if restriction.allow_relay else np.zeros((K, N))
    P2 = P_tn.copy() if restriction.allow_mec else np.zeros((K, N))
    P3 = B * params.P_r_max / N if restriction.allow_mec else np.zeros((K, N))
    if not restriction.allow_mec:
        B = np.zeros((K, N))
    z = np.zeros(K)
    return Allocation(A, B, P1, P2, P3, params.D_arr.copy(), z.copy(), z.copy(),
                      z.copy(), z.copy(), z.copy(), z.copy(),
                      random_phases(params.M, rng) if phases is None else np.asarray(phases, dtype=complex))


def greedy_split(params, channels, alloc, restriction=FULL):
    """Quarter-length slots; fill local (90% of its cap), then relay, then MEC, then local again."""
    K = params.K
    T = params.T
    D = params.D_arr
    R1, R2, R3 = (r * MBIT for r in rates_mbps(alloc, params, channels))
    t = np.full(K, T / 4)
    local_cap = T * params.f_t_max / params.c_t
    d_l = np.minimum(D, 0.9 * local_cap)
    rem = D - d_l
    d_r = np.zeros(K)
    d_m = np.zeros(K)
    if restriction.allow_relay:
        cn_cap = params.f_r_max / K * (T - t) / params.c_r
        d_r = np.minimum(rem, np.minimum(t * R1, cn_cap))
        rem = rem - d_r
    if restriction.allow_mec:
        mec_cap = params.f_m_max / K * t / params.c_m
        d_m = np.minimum(rem, np.minimum(np.minimum(t * R2, t * R3), mec_cap))
        rem = rem - d_m
    extra = np.minimum(rem, local_cap - d_l)
    d_l = d_l + extra
    rem = rem - extra
    if np.any(rem > 1e-9 * D):
        raise RecoverableError("greedy split leaves demand unserved")
    # slots only where their leg carries bits
    t1 = np.where(d_r > 0, t, 0.0)
    t23 = np.where(d_m > 0, t, 0.0)
    return alloc.replace(d_l=D - d_r - d_m, d_r=d_r, d_m=d_m, t1=t1, t2=t23, t3=t23.copy(), t4=t23.copy())


@functools.lru_cache(maxsize=16)
def _joint_program(K, N, relay=True, mec=True):
    """Split, slots and per-subcarrier transmit energies for a frozen assignment.

    Energies e = P t turn every slot rate into t ln(1 + g e / t), a perspective
    that is jointly concave in (t, e), so the whole program is convex. CN and
    MEC frequencies are held at 1/K per user and the relay power at Pr/K per
    user, a restriction of the shared caps. Disabled legs get no variables.
    """
    prog = ConicProgram("joint-start")
    zk = np.zeros(K)
    dl = prog.var("dl", K, nonneg=True)
    ul = prog.var("ul", K, nonneg=True)
    g12 = prog.param("g12", (K, N), nonneg=True)
    own_a = prog.param("own_a", (K, N), nonneg=True)
    D = prog.param("D", K, nonneg=True)
    dl_cap = prog.param("dl_cap", K, nonneg=True)
    Tp = prog.param("T", nonneg=True)
    sc = {n: prog.param(n, nonneg=True) for n in ("loc", "cn", "nats", "Pt", "Pr_user", "cr", "cm", "qr", "qm",
                                                   "qrT")}
    ones = np.ones((1, N))

    def spread(t):
        return cp.reshape(t, (K, 1), order="C") @ ones

    def leg_bits(t, e, g):
        return sc["nats"] * cp.sum(-cp.rel_entr(spread(t), spread(t) + cp.multiply(g, e)), axis=1)

    cost = cp.sum(ul)
    add_cubic_over_square_epigraph(prog, ul, sc["loc"], dl, Tp)
    dr, dm, busy = zk, zk, zk
    if relay:
        dr, t1, e1 = prog.var("dr", K, nonneg=True), prog.var("t1", K, nonneg=True), prog.var("e1", (K, N), nonneg=True)
        ur = prog.var("ur", K, nonneg=True)
        cost = cost + cp.sum(e1) + cp.sum(ur)
        add_cubic_over_square_epigraph(prog, ur, sc["cn"], dr, Tp - t1)
        prog.add(dr <= leg_bits(t1, e1, g12), cp.sum(e1, axis=1) <= sc["Pt"] * t1, e1 <= own_a,
                 sc["cr"] * dr + sc["qr"] * t1 <= sc["qrT"])
        busy = busy + t1
    if mec:
        g3 = prog.param("g3", (K, N), nonneg=True)
        own_b = prog.param("own_b", (K, N), nonneg=True)
        dm = prog.var("dm", K, nonneg=True)
        t2, t3, t4 = (prog.var(n, K, nonneg=True) for n in ("t2", "t3", "t4"))
        e2, e3 = prog.var("e2", (K, N), nonneg=True), prog.var("e3", (K, N), nonneg=True)
        cost = cost + cp.sum(e2) + cp.sum(e3)
        prog.add(dm <= leg_bits(t2, e2, g12), dm <= leg_bits(t3, e3, g3),
                 cp.sum(e2, axis=1) <= sc["Pt"] * t2, cp.sum(e3, axis=1) <= sc["Pr_user"] * t3,
                 e2 <= own_a, e3 <= own_b, sc["cm"] * dm <= sc["qm"] * t4)
        busy = busy + t2 + t3 + t4
    prog.minimize(cost)
    prog.add(dl + dr + dm == D, dl <= dl_cap)
    if relay or mec:
        prog.add(busy <= Tp)
    return prog


def joint_start(params, channels, alloc, restriction=FULL, solver=None):
    """Energy-minimal split, slots and powers for the assignment and phases of ``alloc``.

    Powers are recovered as energy over slot length. Raises RecoverableError
    when the program is infeasible.
    """
    K, N, T = params.K, params.N, params.T
    relay, mec = bool(restriction.allow_relay), bool(restriction.allow_mec)
    prog = _joint_program(K, N, relay, mec)
    # energies live in J; the bound only switches unowned subcarriers off
    big = T * max(params.P_t_max, params.P_r_max)
    values = dict(g12=channels.gain_relay / params.sigma2, own_a=alloc.A * big, D=params.D_arr / MBIT,
                  dl_cap=np.full(K, T * params.f_t_max / params.c_t / MBIT),
                  T=T, loc=params.alpha_t * params.c_t ** 3 * MBIT ** 3,
                  cn=params.alpha_r * params.c_r ** 3 * MBIT ** 3,
                  nats=params.W / MBIT / LN2, Pt=params.P_t_max, Pr_user=params.P_r_max / K,
                  cr=params.c_r * MBIT / GHZ, cm=params.c_m * MBIT / GHZ,
                  qr=params.f_r_max / GHZ / K, qm=params.f_m_max / GHZ / K,
                  qrT=params.f_r_max / GHZ / K * T)
    if mec:
        values.update(g3=np.broadcast_to(channels.cascade_gain(alloc.s) / params.delta2, (K, N)).copy(),
                      own_b=alloc.B * big)
    prog.set(**{k: v for k, v in values.items() if k in prog.parameters})
    out = solve(prog, solver)
    if out.status != OPTIMAL:
        raise RecoverableError(f"joint starting-point program: {out.status}")
    v = dict(out.values)
    for name in ("dr", "dm", "t1", "t2", "t3", "t4"):
        v.setdefault(name, np.zeros(K))
    for name in ("e1", "e2", "e3"):
        v.setdefault(name, np.zeros((K, N)))
    t = {n: np.maximum(v[n], 0.0) for n in ("t1", "t2", "t3", "t4")}

    def power(e, t_k, own):
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where((own > 0) & (t_k[:, None] > 1e-9), np.maximum(e, 0.0) / t_k[:, None], 0.0)
        return p

    P1 = power(v["e1"], t["t1"], alloc.A)
    P2 = power(v["e2"], t["t2"], alloc.A)
    P3 = power(v["e3"], t["t3"], alloc.B)
    # round-off can push a power sum a hair over its cap
    P1 *= np.minimum(1.0, params.P_t_max / np.maximum(P1.sum(axis=1), 1e-300))[:, None]
    P2 *= np.minimum(1.0, params.P_t_max / np.maximum(P2.sum(axis=1), 1e-300))[:, None]
    P3 *= min(1.0, params.P_r_max / max(float(P3.sum()), 1e-300))
    cand = alloc.replace(P1=P1, P2=P2, P3=P3, d_l=v["dl"] * MBIT, d_r=v["dr"] * MBIT, d_m=v["dm"] * MBIT,
                         **t)
    return clean_split(cand, params, channels, restriction)


def init_point(params, channels, rng=None, strategy="convex", restriction=FULL, phases=None):
    """Feasible starting allocation.

    Both strategies start from round-robin subcarriers and random phases.
    ``strategy="convex"`` then jointly picks the split, slots and powers of
    least energy for that assignment (see ``joint_start``); ``strategy="greedy"``
    keeps equal powers and fills quarter-length slots greedily.
    ``phases`` overrides the random transmissive coefficients.
    Raises ScenarioInfeasible when no split serves the demand.
    """
    alloc = initial_radio(params, rng, restriction, phases)
    try:
        if strategy == "greedy":
            alloc = greedy_split(params, channels, alloc, restriction)
        elif strategy == "convex":
            alloc = joint_start(params, channels, alloc, restriction)
        else:
            raise ValueError(f"unknown init strategy {strategy!r}")
    except RecoverableError as exc:
        raise ScenarioInfeasible(str(exc)) from None
    alloc = clean_split(alloc, params, channels, restriction)
    rep = check(alloc, params, channels, restriction)
    if not rep.feasible:
        raise ScenarioInfeasible(f"initial point violates {rep.worst()} by {rep.max_violation:.3e}")
    return alloc
