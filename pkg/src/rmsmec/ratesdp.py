"""Structured barrier solver for the transmissive-covariance SDP.

The program over a Hermitian M x M matrix S (and, in slack mode, a scalar tau) is

    minimize    <C, S> - tau                      (slack mode)
    minimize    <C, S>                            (fixed mode)
    subject to  S >= 0,  S_mm <= 1,
                sum_n w_kn ln(1 + G_kn x_n) >= req_k (1 + tau)    (tau = 0 in fixed mode)
                x_n = v_n^H S v_n.

S enters the rate constraints only through N rank-one functionals and the box
only through the diagonal, so every Newton system of the log-barrier method is
the log-det Hessian plus a low-rank term of rank M + N (+1). Woodbury reduces
each step to O(M^3 + (M + N)^3) work, which is much cheaper than a general
conic interior-point solve on the 2M x 2M real embedding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla


@dataclass
class RateSdp:
    v: np.ndarray  # (N, M) cascade vectors
    weight: np.ndarray  # (K, N) rate per nat, any consistent unit
    gain: np.ndarray  # (K, N) SNR per unit of x_n
    req: np.ndarray  # (K,) required rate, same unit as weight
    C: np.ndarray  # (M, M) Hermitian cost
    slack: bool = True


@dataclass
class RateSdpResult:
    status: str
    S: np.ndarray | None
    tau: float
    objective: float
    newton_steps: int
    gap: float


class _Barrier:
    def __init__(self, prob, tau_lo, tau_hi):
        keep = np.asarray(prob.req) > 0
        self.slack = prob.slack
        v = np.asarray(prob.v, dtype=complex)
        M = v.shape[1]
        self.M = M
        # x_n <= ||v_n||^2 tr(S) <= ||v_n||^2 M
        xmax = np.maximum(np.sum(np.abs(v) ** 2, axis=1) * M, 1e-300)
        scale = float(np.max(xmax))
        self.v = v / np.sqrt(scale)
        req = np.asarray(prob.req, dtype=float)[keep]
        self.w = np.asarray(prob.weight, dtype=float)[keep] / req[:, None]
        self.G = np.asarray(prob.gain, dtype=float)[keep] * scale
        self.K = self.w.shape[0]
        self.C = (prob.C + prob.C.conj().T) / 2
        self.c_tau = -1.0 if self.slack else 0.0
        self.lo, self.hi = tau_lo, tau_hi
        self.nu = 2 * M + self.K + (2 if self.slack else 0)
        self.xmax = xmax / scale

    def x_of(self, S):
        return np.real(np.einsum("nm,mk,nk->n", self.v.conj(), S, self.v))

    def margins(self, S, tau):
        x = self.x_of(S)
        rate = np.sum(self.w * np.log1p(self.G * np.maximum(x, 0.0)), axis=1)
        return rate - ((1.0 + tau) if self.slack else 1.0), x

    def objective(self, S, tau):
        return float(np.real(np.sum(self.C * S.conj())) + self.c_tau * tau)

    def value(self, S, tau, t):
        try:
            L = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            return np.inf
        dg = np.real(np.diag(S))
        if np.any(dg >= 1.0):
            return np.inf
        h, _ = self.margins(S, tau)
        if np.any(h <= 0):
            return np.inf
        f = t * self.objective(S, tau) - 2 * np.sum(np.log(np.real(np.diag(L))))
        f -= np.sum(np.log1p(-dg)) + np.sum(np.log(h))
        if self.slack:
            if not (self.lo < tau < self.hi):
                return np.inf
            f -= np.log(tau - self.lo) + np.log(self.hi - tau)
        return float(f)

    def newton(self, S, tau, t):
        M, K = self.M, self.K
        v = self.v
        L = np.linalg.cholesky(S)
        Linv = sla.solve_triangular(L, np.eye(M), lower=True)
        Sinv = Linv.conj().T @ Linv
        dg = np.real(np.diag(S))
        h, x = self.margins(S, tau)
        denom = 1.0 + self.G * x
        beta = self.w * self.G / denom  # (K, N)
        eta = np.sum(beta / h[:, None], axis=0)
        gS = t * self.C - Sinv + np.diag(1.0 / (1.0 - dg)) - (v.T * eta) @ v.conj()
        gS = (gS + gS.conj().T) / 2
        if self.slack:
            ell = 1.0 / (tau - self.lo) ** 2 + 1.0 / (self.hi - tau) ** 2
            g_tau = t * self.c_tau + np.sum(1.0 / h) - 1.0 / (tau - self.lo) + 1.0 / (self.hi - tau)
        # low-rank factor of the constraint Hessian in (diag, x, tau) coordinates
        N = v.shape[0]
        ny = M + N + (1 if self.slack else 0)
        curv = np.sum(self.w * self.G ** 2 / denom ** 2 / h[:, None], axis=0)
        F = np.zeros((ny, M + K + N))
        F[np.arange(M), np.arange(M)] = 1.0 / (1.0 - dg)
        F[M:M + N, M:M + K] = (beta / h[:, None]).T
        if self.slack:
            F[M + N, M:M + K] = -1.0 / h
        F[M + np.arange(N), M + K + np.arange(N)] = np.sqrt(curv)
        SV = S @ v.T  # columns S v_n
        Kmat = np.zeros((ny, ny))
        Kmat[:M, :M] = np.abs(S) ** 2
        Kmat[:M, M:M + N] = np.abs(SV) ** 2
        Kmat[M:M + N, :M] = Kmat[:M, M:M + N].T
        Kmat[M:M + N, M:M + N] = np.abs(v.conj() @ SV) ** 2
        if self.slack:
            Kmat[M + N, M + N] = 1.0 / ell
        W0 = S @ gS @ S
        y0 = np.concatenate([np.real(np.diag(W0)), self.x_of(W0)] + ([[g_tau / ell]] if self.slack else []))
        small = np.eye(F.shape[1]) + F.T @ Kmat @ F
        c = np.linalg.solve(small, F.T @ y0)
        u = F @ c
        corr = np.diag(u[:M]) + (v.T * u[M:M + N]) @ v.conj()
        dS = -(W0 - S @ corr @ S)
        dS = (dS + dS.conj().T) / 2
        dtau = -(g_tau - u[M + N]) / ell if self.slack else 0.0
        dec2 = -(np.real(np.sum(gS * dS.conj())) + (g_tau * dtau if self.slack else 0.0))
        return dS, dtau, dec2, gS, L

    def max_step(self, S, tau, dS, dtau, L):
        a = np.inf
        Linv_dS = sla.solve_triangular(L, dS, lower=True)
        Mx = sla.solve_triangular(L, Linv_dS.conj().T, lower=True).conj().T
        lam = np.linalg.eigvalsh((Mx + Mx.conj().T) / 2)[0]
        if lam < 0:
            a = min(a, -1.0 / lam)
        ddg = np.real(np.diag(dS))
        dg = np.real(np.diag(S))
        pos = ddg > 0
        if np.any(pos):
            a = min(a, float(np.min((1.0 - dg[pos]) / ddg[pos])))
        if self.slack and dtau != 0:
            a = min(a, (self.hi - tau) / dtau if dtau > 0 else (tau - self.lo) / -dtau)
        return a


def _interior_start(S0, M):
    S0 = np.asarray(S0, dtype=complex)
    S0 = (S0 + S0.conj().T) / 2
    w, Q = np.linalg.eigh(S0)
    S0 = (Q * np.maximum(w, 0.0)) @ Q.conj().T
    S = 0.9 * S0 + 0.1 * np.eye(M) * max(float(np.max(np.real(np.diag(S0)))), 1e-3)
    return S * (0.95 / float(np.max(np.real(np.diag(S)))))


def _run(bar, S, tau, tol, mu, max_newton, stop_tau=None):
    t = 1.0
    steps = 0
    status = "optimal"
    while True:
        for _ in range(60):
            if steps >= max_newton:
                return S, tau, "numerical_limit", steps, bar.nu / t
            dS, dtau, dec2, gS, L = bar.newton(S, tau, t)
            steps += 1
            if dec2 / 2 <= 1e-10:
                break
            f0 = bar.value(S, tau, t)
            a = min(1.0, 0.99 * bar.max_step(S, tau, dS, dtau, L))
            slope = -dec2
            while a > 1e-14:
                f1 = bar.value(S + a * dS, tau + a * dtau, t)
                if f1 <= f0 + 0.25 * a * slope:
                    break
                a *= 0.5
            else:
                break
            S = S + a * dS
            S = (S + S.conj().T) / 2
            tau = tau + a * dtau
            if stop_tau is not None and tau > stop_tau:
                return S, tau, "optimal", steps, bar.nu / t
            if dec2 / 2 <= 1e-8 and a == 1.0:
                break
        gap = bar.nu / t
        if gap <= tol * max(1.0, abs(bar.objective(S, tau))):
            return S, tau, status, steps, gap
        t *= mu


def solve_rate_sdp(prob, S0=None, tol=1e-9, mu=20.0, max_newton=2000):
    """Solve a :class:`RateSdp` from a starting covariance ``S0`` (any PSD matrix)."""
    v = np.asarray(prob.v)
    M = v.shape[1]
    S0 = np.eye(M) if S0 is None else S0
    active = np.asarray(prob.req) > 0
    if not np.any(active):
        if prob.slack:
            return RateSdpResult("unbounded", None, np.inf, -np.inf, 0, np.nan)
    S = _interior_start(S0, M)

    probe = _Barrier(RateSdp(prob.v, prob.weight, prob.gain, prob.req, prob.C, True), -1.0, 1.0)
    ratio = np.sum(probe.w * np.log1p(probe.G * np.maximum(probe.x_of(S), 0.0)), axis=1) if probe.K else np.ones(1)
    upper = np.sum(probe.w * np.log1p(probe.G * probe.xmax[None, :]), axis=1) if probe.K else np.ones(1)
    if np.any(upper <= 0):
        return RateSdpResult("infeasible", None, np.nan, np.nan, 0, np.nan)
    tau_hi = 2.0 * float(np.min(upper)) + 1.0
    if np.min(ratio) <= 0:
        # no signal at the start point: fall back to the identity-like interior point
        S = 0.95 * np.eye(M)
        ratio = np.sum(probe.w * np.log1p(probe.G * np.maximum(probe.x_of(S), 0.0)), axis=1)
        if np.min(ratio) <= 0:
            return RateSdpResult("infeasible", None, np.nan, np.nan, 0, np.nan)
    steps_total = 0
    if prob.slack:
        bar = _Barrier(prob, -1.0, tau_hi)
        tau = -1.0 + 0.5 * float(np.min(ratio))
        S, tau, status, steps, gap = _run(bar, S, tau, tol, mu, max_newton)
        return RateSdpResult(status, S, float(tau), bar.objective(S, tau), steps, gap)

    if np.any(ratio <= 1.0 + 1e-9):
        # phase I: push the worst relative margin above zero
        p1 = _Barrier(RateSdp(prob.v, prob.weight, prob.gain, prob.req, np.zeros((M, M)), True), -1.0, tau_hi)
        tau = -1.0 + 0.5 * float(np.min(ratio))
        S, tau, _, steps, _ = _run(p1, S, tau, tol, mu, max_newton, stop_tau=1e-7)
        steps_total += steps
        if tau <= 1e-7:
            return RateSdpResult("infeasible", None, float(tau), np.nan, steps_total, np.nan)
    bar = _Barrier(prob, 0.0, 0.0)
    S, _, status, steps, gap = _run(bar, S, 0.0, tol, mu, max_newton)
    return RateSdpResult(status, S, 0.0, bar.objective(S, 0.0), steps_total + steps, gap)
