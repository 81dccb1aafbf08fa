"""Subcarrier shares and transmit powers with the split, slots and phases fixed."""

from __future__ import annotations

import functools
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from ..convexcore import OPTIMAL, ConicProgram, perspective_log, solve
from ..sysmodel import LN2
from .common import FULL, RecoverableError

SHARE_FLOOR = 1e-7


@dataclass
class P2Result:
    A: np.ndarray
    B: np.ndarray
    P1_tilde: np.ndarray
    P2_tilde: np.ndarray
    P3_tilde: np.ndarray
    objective: float
    status: str


def _gains(params, channels, s):
    g12 = channels.gain_relay / params.sigma2
    g3 = np.broadcast_to(channels.cascade_gain(s) / params.delta2, g12.shape).copy()
    return g12, g3


def _required_nats(params, d, t):
    """Demand of one leg as nats per second per hertz; raises when bits need a zero-length slot."""
    d = np.asarray(d, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any((d > 0) & (t <= 0)):
        raise RecoverableError("a leg carries bits in a zero-length slot")
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(d > 0, d / t, 0.0)
    return r * LN2 / params.W


@functools.lru_cache(maxsize=16)
def _p2_program(K, N):
    prog = ConicProgram("subcarrier-relaxed")
    a, b = prog.var("a", (K, N), nonneg=True), prog.var("b", (K, N), nonneg=True)
    p1, p2, p3 = (prog.var(n, (K, N), nonneg=True) for n in ("p1", "p2", "p3"))
    g12 = prog.param("g12", (K, N), nonneg=True)
    g3 = prog.param("g3", (K, N), nonneg=True)
    req = {n: prog.param(n, K, nonneg=True) for n in ("q1", "q2", "q3")}
    t = {n: prog.param(n, K, nonneg=True) for n in ("t1", "t2", "t3")}
    cap = {n: prog.param(n, K, nonneg=True) for n in ("c1", "c2")}
    need_a = prog.param("need_a", (K, N), nonneg=True)
    need_b = prog.param("need_b", (K, N), nonneg=True)
    Pr = prog.param("Pr", nonneg=True)
    prog.minimize(t["t1"] @ cp.sum(p1, axis=1) + t["t2"] @ cp.sum(p2, axis=1)
                  + t["t3"] @ cp.sum(p3, axis=1))
    prog.add(cp.sum(perspective_log(a, p1, g12), axis=1) >= req["q1"],
             cp.sum(perspective_log(a, p2, g12), axis=1) >= req["q2"],
             cp.sum(perspective_log(b, p3, g3), axis=1) >= req["q3"],
             cp.sum(p1, axis=1) <= cap["c1"], cp.sum(p2, axis=1) <= cap["c2"], cp.sum(p3) <= Pr,
             a <= need_a, b <= need_b, cp.sum(a, axis=0) <= 1, cp.sum(b, axis=0) <= 1)
    return prog


def solve_p2(params, channels, alloc, solver=None, restriction=FULL):
    """Relaxed joint share/power program with task split, slots and phases fixed.

    Powers are returned in perspective form (p~ = a p). Users with no demand on
    a leg are held to zero power there, and users with no demand on either TN
    leg (or on the relay leg) get no share, which leaves the optimum unchanged.
    """
    K, N = params.K, params.N
    prog = _p2_program(K, N)
    g12, g3 = _gains(params, channels, alloc.s)
    if not restriction.allow_mec:
        # keeps MEC-free schemes independent of the surface
        g3 = np.zeros_like(g3)
    q1 = _required_nats(params, alloc.d_r, alloc.t1)
    q2 = _required_nats(params, alloc.d_m, alloc.t2)
    q3 = _required_nats(params, alloc.d_m, alloc.t3)
    need_a = ((q1 > 0) | (q2 > 0)).astype(float)[:, None] * np.ones((1, N))
    need_b = (q3 > 0).astype(float)[:, None] * np.ones((1, N))
    prog.set(g12=g12, g3=g3, q1=q1, q2=q2, q3=q3, t1=alloc.t1, t2=alloc.t2, t3=alloc.t3,
             c1=np.where(q1 > 0, params.P_t_max, 0.0), c2=np.where(q2 > 0, params.P_t_max, 0.0),
             need_a=need_a, need_b=need_b, Pr=params.P_r_max)
    out = solve(prog, solver)
    if out.status != OPTIMAL:
        raise RecoverableError(f"relaxed subcarrier program: {out.status}")
    v = out.values
    A = np.clip(v["a"], 0.0, 1.0)
    B = np.clip(v["b"], 0.0, 1.0)
    return P2Result(A, B, np.maximum(v["p1"], 0), np.maximum(v["p2"], 0), np.maximum(v["p3"], 0),
                    out.objective, out.status)


def round_subcarriers(A_rel, B_rel, floor=SHARE_FLOOR):
    """Give every subcarrier to the user with the largest relaxed share.

    Ties go to the lowest user index (``argmax`` returns the first maximum);
    columns whose largest share is at most ``floor`` stay unassigned.
    """

    def one(X):
        X = np.asarray(X, dtype=float)
        out = np.zeros_like(X)
        if X.size == 0:
            return out
        k_star = np.argmax(X, axis=0)
        used = X[k_star, np.arange(X.shape[1])] > floor
        out[k_star[used], np.arange(X.shape[1])[used]] = 1.0
        return out

    return one(A_rel), one(B_rel)


@functools.lru_cache(maxsize=16)
def _power_program(K, N):
    prog = ConicProgram("power-fixed-shares")
    p1, p2, p3 = (prog.var(n, (K, N), nonneg=True) for n in ("p1", "p2", "p3"))
    r1, r2, r3 = (prog.var(n, (K, N)) for n in ("r1", "r2", "r3"))
    k1, k3 = prog.param("k1", (K, N), nonneg=True), prog.param("k3", (K, N), nonneg=True)
    wa, wb = prog.param("wa", (K, N), nonneg=True), prog.param("wb", (K, N), nonneg=True)
    ma, mb = prog.param("ma", (K, N), nonneg=True), prog.param("mb", (K, N), nonneg=True)
    req = {n: prog.param(n, K, nonneg=True) for n in ("q1", "q2", "q3")}
    t = {n: prog.param(n, K, nonneg=True) for n in ("t1", "t2", "t3")}
    cap = {n: prog.param(n, K, nonneg=True) for n in ("c1", "c2")}
    Pr = prog.param("Pr", nonneg=True)
    prog.minimize(t["t1"] @ cp.sum(p1, axis=1) + t["t2"] @ cp.sum(p2, axis=1)
                  + t["t3"] @ cp.sum(p3, axis=1))
    prog.add(r1 <= cp.log(1 + cp.multiply(k1, p1)), r2 <= cp.log(1 + cp.multiply(k1, p2)),
             r3 <= cp.log(1 + cp.multiply(k3, p3)),
             cp.sum(cp.multiply(wa, r1), axis=1) >= req["q1"],
             cp.sum(cp.multiply(wa, r2), axis=1) >= req["q2"],
             cp.sum(cp.multiply(wb, r3), axis=1) >= req["q3"],
             p1 <= ma, p2 <= ma, p3 <= mb,
             cp.sum(p1, axis=1) <= cap["c1"], cp.sum(p2, axis=1) <= cap["c2"], cp.sum(p3) <= Pr)
    return prog


def repair_powers_after_rounding(params, channels, A, B, alloc, solver=None):
    """Minimum-energy powers for frozen shares ``A``/``B`` (binary or fractional).

    Returns actual per-subcarrier powers (P = p~ / a) and the transmit energy.
    Raises RecoverableError when the frozen shares cannot carry the current split.
    """
    K, N = params.K, params.N
    prog = _power_program(K, N)
    g12, g3 = _gains(params, channels, alloc.s)
    A = np.where(A > SHARE_FLOOR, A, 0.0)
    B = np.where(B > SHARE_FLOOR, B, 0.0)
    safeA = np.where(A > 0, A, 1.0)
    safeB = np.where(B > 0, B, 1.0)
    q1 = _required_nats(params, alloc.d_r, alloc.t1)
    q2 = _required_nats(params, alloc.d_m, alloc.t2)
    q3 = _required_nats(params, alloc.d_m, alloc.t3)
    for q, share, gain in ((q1, A, g12), (q2, A, g12), (q3, B, g3)):
        if np.any((q > 0) & ((share * gain).sum(axis=1) <= 0)):
            raise RecoverableError("a leg with demand has no usable subcarrier")
    ma = np.where(A > 0, params.P_t_max, 0.0)
    mb = np.where(B > 0, params.P_r_max, 0.0)
    prog.set(k1=np.where(A > 0, g12 / safeA, 0.0), k3=np.where(B > 0, g3 / safeB, 0.0),
             wa=A, wb=B, ma=ma, mb=mb, q1=q1, q2=q2, q3=q3, t1=alloc.t1, t2=alloc.t2, t3=alloc.t3,
             c1=np.where(q1 > 0, params.P_t_max, 0.0), c2=np.where(q2 > 0, params.P_t_max, 0.0),
             Pr=params.P_r_max)
    out = solve(prog, solver)
    if out.status != OPTIMAL:
        raise RecoverableError(f"power program for rounded shares: {out.status}")
    v = out.values
    P1 = np.where(A > 0, np.maximum(v["p1"], 0) / safeA, 0.0)
    P2 = np.where(A > 0, np.maximum(v["p2"], 0) / safeA, 0.0)
    P3 = np.where(B > 0, np.maximum(v["p3"], 0) / safeB, 0.0)
    return (P1, P2, P3), out.objective

