"""Barrier SDP against a general conic formulation of the same program."""

import cvxpy as cp
import numpy as np
import pytest

from rmsmec.ratesdp import RateSdp, solve_rate_sdp


def _instance(seed, M=3, N=4, K=2):
    rng = np.random.default_rng(seed)
    v = (rng.standard_normal((N, M)) + 1j * rng.standard_normal((N, M))) / np.sqrt(2)
    owner = np.arange(N) % K
    weight = np.zeros((K, N))
    weight[owner, np.arange(N)] = rng.uniform(0.5, 1.5, N)
    gain = rng.uniform(0.5, 3.0, (K, N))
    req = rng.uniform(0.2, 0.6, K)
    X = rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))
    C = np.eye(M) - 0.3 * (X @ X.conj().T) / M
    return v, weight, gain, req, C


def _conic_oracle(v, weight, gain, req, C, slack):
    M = v.shape[1]
    S = cp.Variable((M, M), hermitian=True)
    x = cp.hstack([cp.real(v[n].conj() @ S @ v[n]) for n in range(v.shape[0])])
    tau = cp.Variable() if slack else 0.0
    cons = [S >> 0, cp.real(cp.diag(S)) <= 1]
    for k in range(weight.shape[0]):
        cons.append(cp.sum(cp.multiply(weight[k], cp.log(1 + cp.multiply(gain[k], x)))) >= req[k] * (1 + tau))
    obj = cp.real(cp.trace(C @ S)) - (tau if slack else 0.0)
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver="CLARABEL", tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    return prob.value, S.value, (tau.value if slack else 0.0)


def _rates(v, weight, gain, S):
    x = np.real(np.einsum("nm,mk,nk->n", v.conj(), S, v))
    return np.sum(weight * np.log1p(gain * x), axis=1)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("slack", [False, True])
def test_matches_conic_solver(seed, slack):
    v, weight, gain, req, C = _instance(seed)
    res = solve_rate_sdp(RateSdp(v, weight, gain, req, C, slack))
    ref_obj, _, ref_tau = _conic_oracle(v, weight, gain, req, C, slack)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(ref_obj, rel=1e-5, abs=1e-6)
    if slack:
        assert res.tau == pytest.approx(ref_tau, rel=1e-5, abs=1e-6)
    S = res.S
    assert np.allclose(S, S.conj().T)
    assert np.linalg.eigvalsh(S)[0] >= -1e-9
    assert np.all(np.real(np.diag(S)) <= 1 + 1e-9)
    assert np.all(_rates(v, weight, gain, S) >= req * (1 + res.tau) * (1 - 1e-7))


def test_impossible_demand_is_infeasible():
    v, weight, gain, req, C = _instance(1)
    res = solve_rate_sdp(RateSdp(v, weight, gain, req * 1e3, C, slack=False))
    assert res.status == "infeasible"


def test_slack_mode_reports_negative_margin_when_demand_too_high():
    v, weight, gain, req, C = _instance(2)
    res = solve_rate_sdp(RateSdp(v, weight, gain, req * 1e3, np.zeros_like(C), slack=True))
    assert res.status == "optimal" and res.tau < 0
