"""Transmissive coefficients with every other block fixed.

The covariance S = s s^H is optimized under the relay-leg rate constraints.
Rank one is enforced by the DC penalty tr(S) - ||S||_2, whose subtracted norm
is replaced by its tangent minorant at the previous iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..convexcore import linearize_spectral_norm
from ..ratesdp import RateSdp, solve_rate_sdp
from ..scenario import STREAM_SDR, rng_for
from ..sysmodel import LN2
from .common import MBIT, RecoverableError

MODES = ("max_slack", "feasibility", "min_trace")


@dataclass
class DcSettings:
    """``mode`` picks the DC objective.

    max_slack   -tau + eta (tr S - lower bound): widest relative rate margin, rank one by penalty
    feasibility tr S - lower bound under the plain rate constraints
    min_trace   tr S under the plain rate constraints (no rank penalty)
    """

    mode: str = "max_slack"
    eta: float = 1.0
    max_iters: int = 30
    eps_rank: float | None = None
    tol: float = 1e-9
    start: str = "relaxed"  # relaxed: rank-free optimum; previous: s s^H of the iterate
    tau_tol: float = 1e-6


@dataclass
class P4Result:
    S: np.ndarray
    s: np.ndarray
    rank_gap: float
    status: str
    iterations: int
    dc_values: list = field(default_factory=list)
    tau: float = float("nan")


def rank_gap(S):
    """(tr S - ||S||_2) / tr S, zero exactly for rank <= 1."""
    S = (S + S.conj().T) / 2
    w = np.linalg.eigvalsh(S)
    tr = float(np.sum(w))
    return max(tr - float(w[-1]), 0.0) / max(tr, 1e-12)


def extract_rank_one(S):
    """Leading eigenpair sqrt(lambda_1) u_1 with magnitudes clipped to 1."""
    S = (np.asarray(S) + np.asarray(S).conj().T) / 2
    w, Q = np.linalg.eigh(S)
    lam = max(float(w[-1]), 0.0)
    s = np.sqrt(lam) * Q[:, -1]
    mag = np.abs(s)
    return np.where(mag > 1.0, s / np.where(mag > 0, mag, 1.0), s)


def rate_program(params, channels, alloc, C, slack):
    """Relay-leg rate constraints of the current allocation in Mbit/s."""
    weight = alloc.B * params.W / MBIT / LN2
    gain = alloc.P3 / params.delta2
    with np.errstate(divide="ignore", invalid="ignore"):
        req = np.where(alloc.d_m > 0, alloc.d_m / MBIT / np.where(alloc.t3 > 0, alloc.t3, 1.0), 0.0)
    if np.any((alloc.d_m > 0) & (alloc.t3 <= 0)):
        raise RecoverableError("relay leg carries bits in a zero-length slot")
    return RateSdp(channels.v, weight, gain, req, C, slack)


def relative_margin(params, channels, alloc, s):
    """min_k rate_k(s) / required_k - 1 over users with relay-leg demand (inf if none)."""
    prob = rate_program(params, channels, alloc, np.zeros((1, 1)), True)
    active = prob.req > 0
    if not np.any(active):
        return np.inf
    x = channels.cascade_gain(s)
    rate = np.sum(prob.weight * np.log1p(prob.gain * x[None, :]), axis=1)
    return float(np.min(rate[active] / prob.req[active]) - 1.0)


def solve_p4_dc(params, channels, alloc, dc_settings=None):
    """DC iterations for the transmissive covariance from S0 = s s^H of ``alloc``."""
    st = dc_settings or DcSettings()
    if st.mode not in MODES:
        raise ValueError(f"unknown P4 mode {st.mode!r}")
    eps_rank = params.epsilon_rank if st.eps_rank is None else st.eps_rank
    M = params.M
    S_i = np.outer(alloc.s, alloc.s.conj())
    if not np.any(alloc.d_m > 0):
        raise RecoverableError("no relay-leg demand; coefficients are free")
    if st.start == "relaxed" and st.mode != "min_trace":
        relaxed = solve_rate_sdp(rate_program(params, channels, alloc, np.zeros((M, M)), st.mode == "max_slack"),
                                 S_i, tol=st.tol)
        if relaxed.status == "optimal" and relaxed.S is not None:
            S_i = relaxed.S
    dc_values = []
    gap = rank_gap(S_i) if np.any(S_i) else 0.0
    status = "optimal"
    tau = np.nan
    it = 0
    for it in range(1, st.max_iters + 1):
        if st.mode == "min_trace":
            C = np.eye(M)
        else:
            lin = linearize_spectral_norm(S_i)
            C = st.eta * (np.eye(M) - lin.U) if st.mode == "max_slack" else np.eye(M) - lin.U
        res = solve_rate_sdp(rate_program(params, channels, alloc, C, st.mode == "max_slack"),
                             S_i, tol=st.tol)
        if res.status != "optimal" or res.S is None:
            status = res.status
            if it == 1:
                raise RecoverableError(f"transmissive SDP: {res.status}")
            break
        S_new = res.S
        tau_prev, tau = tau, res.tau
        if st.mode != "min_trace":
            dc_values.append(float(np.real(np.trace(S_new))) - lin(S_new))
        S_i = S_new
        gap = rank_gap(S_i)
        if st.mode == "min_trace":
            break
        # max-slack keeps iterating while the rate margin still moves
        settled = st.mode != "max_slack" or abs(tau - tau_prev) <= st.tau_tol * (1.0 + abs(tau))
        if gap <= eps_rank and settled:
            break
    return P4Result(S_i, extract_rank_one(S_i), gap, status, it, dc_values, tau)


def solve_p4_sdr(params, channels, alloc, draws=200, rng=None, tol=1e-9):
    """Rank-relaxed max-slack program followed by Gaussian randomization.

    Each candidate is drawn from CN(0, S), scaled so its largest magnitude is 1,
    and the one with the widest relative rate margin wins. Raises
    RecoverableError when no candidate meets the rate constraints.
    """
    M = params.M
    if not np.any(alloc.d_m > 0):
        raise RecoverableError("no relay-leg demand; coefficients are free")
    S0 = np.outer(alloc.s, alloc.s.conj())
    res = solve_rate_sdp(rate_program(params, channels, alloc, np.zeros((M, M)), True), S0, tol=tol)
    if res.status != "optimal" or res.S is None:
        raise RecoverableError(f"relaxed transmissive SDP: {res.status}")
    rng = rng_for(params.seed, STREAM_SDR) if rng is None else rng
    w, Q = np.linalg.eigh((res.S + res.S.conj().T) / 2)
    root = Q * np.sqrt(np.maximum(w, 0.0))
    z = (rng.standard_normal((draws, M)) + 1j * rng.standard_normal((draws, M))) / np.sqrt(2)
    cands = z @ root.T
    best, best_margin = None, -np.inf
    for s in cands:
        peak = np.max(np.abs(s))
        if peak <= 0:
            continue
        s = s / peak
        margin = relative_margin(params, channels, alloc, s)
        if margin > best_margin:
            best, best_margin = s, margin
    if best is None or best_margin < 0:
        raise RecoverableError("no randomized candidate meets the rate constraints")
    return P4Result(res.S, best, rank_gap(res.S), "optimal", 1, [], best_margin)
