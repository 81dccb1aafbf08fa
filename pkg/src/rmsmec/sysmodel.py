"""Rates, energies, the device-side objective and the constraint checker."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

LN2 = np.log(2.0)


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class Allocation:
    """A full decision point. Bits, seconds and watts throughout.

    ``A``/``B`` are subcarrier shares (binary after rounding), ``P1``..``P3`` the
    per-subcarrier transmit powers of slots I-III, ``d_*`` the task split and
    ``t1``..``t4`` the slot durations. ``S`` is optional; when absent the
    covariance is ``s s^H``.
    """

    A: np.ndarray
    B: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    P3: np.ndarray
    d_l: np.ndarray
    d_r: np.ndarray
    d_m: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    t3: np.ndarray
    t4: np.ndarray
    s: np.ndarray
    S: np.ndarray | None = None

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @property
    def S_mat(self):
        if self.S is not None:
            return self.S
        return np.outer(self.s, self.s.conj())

    @property
    def K(self):
        return self.A.shape[0]

    def split(self):
        return np.stack([self.d_l, self.d_r, self.d_m])

    def slots(self):
        return np.stack([self.t1, self.t2, self.t3, self.t4])

    def copy(self):
        return Allocation(*(None if x is None else np.array(x, copy=True)
                            for x in dataclasses.astuple(self)))


def local_only_allocation(params, M=None):
    K, N = params.K, params.N
    M = params.M if M is None else M
    z = np.zeros((K, N))
    zk = np.zeros(K)
    return Allocation(z, z.copy(), z.copy(), z.copy(), z.copy(), params.D_arr.copy(), zk.copy(),
                      zk.copy(), zk.copy(), zk.copy(), zk.copy(), zk.copy(), np.ones(M, dtype=complex))


# ---------------------------------------------------------------- rates

def rate_slot1(params, h_gain2, a, p, noise=None):
    """a W log2(1 + p |h|^2 / sigma^2) in bits/s."""
    noise = params.sigma2 if noise is None else noise
    return np.asarray(a) * params.W * np.log1p(np.asarray(p) * h_gain2 / noise) / LN2


def rate_slot1_perspective(params, h_gain2, a, p_tilde, noise=None):
    """Relaxed rate a W log2(1 + p~ |h|^2 / (a sigma^2)); zero at a = 0."""
    noise = params.sigma2 if noise is None else noise
    a = np.asarray(a, dtype=float)
    p_tilde = np.asarray(p_tilde, dtype=float)
    return params.W * share_log(a, p_tilde * h_gain2 / noise) / LN2


def share_log(a, x):
    """a ln(1 + x / a) for a, x >= 0, closed to zero at a = 0 and finite for subnormal a."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    pos = (a > 0) & (x > 0)
    la = np.log(np.where(pos, a, 1.0))
    lx = np.log(np.where(pos, x, 1.0))
    return np.where(pos, a * (np.logaddexp(la, lx) - la), 0.0)


rate_slot2 = rate_slot1
rate_slot2_perspective = rate_slot1_perspective


def rate_slot3(params, channels, b, p, s, n=None):
    """b W log2(1 + p |v_n^H s|^2 / delta^2); all subcarriers when ``n`` is None."""
    gain = channels.cascade_gain(s)
    if n is not None:
        gain = gain[n]
    return np.asarray(b) * params.W * np.log1p(np.asarray(p) * gain / params.delta2) / LN2


def rate_slot3_cov(params, channels, b, p, S, n=None):
    gain = np.maximum(channels.cascade_gain_cov(S), 0.0)
    if n is not None:
        gain = gain[n]
    return np.asarray(b) * params.W * np.log1p(np.asarray(p) * gain / params.delta2) / LN2


def leg_rates(alloc, params, channels):
    """Per-user sum rates (bits/s) of slots I, II and III."""
    g = channels.gain_relay
    r1 = rate_slot1(params, g, alloc.A, alloc.P1).sum(axis=1)
    r2 = rate_slot2(params, g, alloc.A, alloc.P2).sum(axis=1)
    if alloc.S is not None:
        r3 = rate_slot3_cov(params, channels, alloc.B, alloc.P3, alloc.S).sum(axis=1)
    else:
        r3 = rate_slot3(params, channels, alloc.B, alloc.P3, alloc.s).sum(axis=1)
    return r1, r2, r3


# ---------------------------------------------------------------- energies

def offload_energy(alloc, params=None):
    e1 = (alloc.A * alloc.P1).sum(axis=1) * alloc.t1
    e2 = (alloc.A * alloc.P2).sum(axis=1) * alloc.t2
    e3 = (alloc.B * alloc.P3).sum(axis=1) * alloc.t3
    return e1 + e2 + e3


def local_compute_energy(params, d_l, T=None):
    T = params.T if T is None else T
    return params.alpha_t * (params.c_t * np.asarray(d_l, dtype=float)) ** 3 / T ** 2


def local_cpu_ok(params, d_l, T=None, rtol=0.0):
    T = params.T if T is None else T
    return params.c_t * np.asarray(d_l) / T <= params.f_t_max * (1 + rtol)


def cn_compute_energy(params, d_r, t1, T=None):
    """alpha_r (c_r d_r)^3 / (T - t1)^2. Raises DomainError when t1 >= T."""
    T = params.T if T is None else T
    d_r = np.asarray(d_r, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    if np.any(t1 >= T):
        raise DomainError("t1 >= T leaves no compute time at the CN")
    return params.alpha_r * (params.c_r * d_r) ** 3 / (T - t1) ** 2


def _cn_energy_safe(params, d_r, t1):
    rem = params.T - t1
    with np.errstate(divide="ignore", invalid="ignore"):
        e = params.alpha_r * (params.c_r * d_r) ** 3 / rem ** 2
    return np.where(d_r > 0, np.where(rem > 0, e, np.inf), 0.0)


def cn_cpu_load(params, d_r, t1):
    """Sum of CN frequencies needed to finish every relay share in T - t1."""
    rem = params.T - np.asarray(t1, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = params.c_r * d_r / rem
    return float(np.sum(np.where(d_r > 0, np.where(rem > 0, f, np.inf), 0.0)))


def mec_slot_time(params, d_m, f):
    if np.any(np.asarray(f) <= 0):
        raise DomainError("MEC frequency must be positive")
    return params.c_m * np.asarray(d_m, dtype=float) / f


def mec_cpu_load(params, d_m, t4):
    t4 = np.asarray(t4, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = params.c_m * d_m / t4
    return float(np.sum(np.where(d_m > 0, np.where(t4 > 0, f, np.inf), 0.0)))


def energy_terms(alloc, params):
    """Per-user (offload, local, CN) energies in J."""
    return (offload_energy(alloc, params), local_compute_energy(params, alloc.d_l),
            _cn_energy_safe(params, alloc.d_r, alloc.t1))


def total_objective(alloc, params):
    """Device-side energy: offloading plus local and CN computing. MEC energy is not counted."""
    e_off, e_loc, e_cn = energy_terms(alloc, params)
    return float(np.sum(e_off) + np.sum(e_loc) + np.sum(e_cn))


# ---------------------------------------------------------------- feasibility

@dataclass
class FeasibilityReport:
    residuals: dict
    tol: float

    @property
    def max_violation(self):
        return max(self.residuals.values()) if self.residuals else 0.0

    @property
    def feasible(self):
        return bool(self.max_violation <= self.tol)

    def worst(self):
        return max(self.residuals, key=self.residuals.get)

    def to_text(self):
        lines = [f"feasible: {self.feasible} (tol {self.tol:g}, max violation {self.max_violation:.3e})"]
        for key, val in self.residuals.items():
            flag = "VIOLATED" if val > self.tol else "ok"
            lines.append(f"{key:>10s}  {val: .6e}  {flag}")
        return "\n".join(lines)


def _pos_max(x):
    x = np.asarray(x, dtype=float)
    return float(np.max(x)) if x.size else -np.inf


def check_feasibility(alloc, params, channels, tol=1e-6):
    """Signed residuals of every constraint, normalized by the constraint's natural scale.

    A residual is ``(lhs - rhs) / scale`` for ``lhs <= rhs``; positive means violated.
    """
    D = params.D_arr
    T = params.T
    R1, R2, R3 = leg_rates(alloc, params, channels)
    res = {}
    res["eq1"] = _pos_max(np.abs(alloc.d_l + alloc.d_r + alloc.d_m - D) / D)
    res["bounds"] = _pos_max(np.concatenate([
        -np.concatenate([alloc.d_l, alloc.d_r, alloc.d_m]) / np.tile(D, 3),
        -np.concatenate([alloc.t1, alloc.t2, alloc.t3, alloc.t4]) / T,
        -np.concatenate([alloc.P1.ravel(), alloc.P2.ravel()]) / params.P_t_max,
        -alloc.P3.ravel() / params.P_r_max,
    ]))
    res["eq2"] = _pos_max((alloc.t1 + alloc.t2 + alloc.t3 + alloc.t4 - T) / T)
    res["eq4"] = max(_pos_max(alloc.A.sum(axis=0) - 1), _pos_max(-alloc.A), _pos_max(alloc.A - 1))
    res["eq20"] = max(_pos_max(alloc.B.sum(axis=0) - 1), _pos_max(-alloc.B), _pos_max(alloc.B - 1))
    res["eq6/38b"] = _pos_max((alloc.d_r - alloc.t1 * R1) / D)
    res["eq8"] = _pos_max(((alloc.A * alloc.P1).sum(axis=1) - params.P_t_max) / params.P_t_max)
    res["eq11"] = _pos_max(((alloc.A * alloc.P2).sum(axis=1) - params.P_t_max) / params.P_t_max)
    res["eq22"] = (float(np.sum(alloc.B * alloc.P3)) - params.P_r_max) / params.P_r_max
    res["eq23/40c/40d"] = max(_pos_max((alloc.d_m - alloc.t2 * R2) / D),
                              _pos_max((alloc.d_m - alloc.t3 * R3) / D))
    res["eq32/38k"] = _pos_max((params.c_t * alloc.d_l / T - params.f_t_max) / params.f_t_max)
    res["eq35/38l"] = (cn_cpu_load(params, alloc.d_r, alloc.t1) - params.f_r_max) / params.f_r_max
    res["eq37/38m"] = (mec_cpu_load(params, alloc.d_m, alloc.t4) - params.f_m_max) / params.f_m_max
    res["eq13/38p"] = _pos_max(np.abs(alloc.s) - 1)
    if alloc.S is not None:
        S = alloc.S
        herm = np.max(np.abs(S - S.conj().T)) if S.size else 0.0
        lam_min = np.linalg.eigvalsh((S + S.conj().T) / 2)[0] if S.size else 0.0
        res["48c"] = _pos_max(np.real(np.diag(S)) - 1)
        res["48d"] = max(float(-lam_min), float(herm))
    return FeasibilityReport({k: float(v) for k, v in res.items()}, tol)
