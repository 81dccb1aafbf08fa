"""Brute-force and closed-form references for the subcarrier/power and coefficient blocks.

Nothing here calls a convex solver, so agreement with the block solvers is an
independent check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

LN2 = np.log(2.0)


def min_power_single(params, gain2, d, t, noise=None):
    """Power that carries ``d`` bits in ``t`` seconds on one full subcarrier."""
    noise = params.sigma2 if noise is None else noise
    return noise * (2.0 ** (d / (t * params.W)) - 1.0) / gain2


def waterfill_min_power(gains, weights, req_nats, p_cap=np.inf, iters=200):
    """Least total power with sum_n w_n ln(1 + g_n p_n) >= req_nats.

    The optimum is p_n = max(0, w_n mu - 1/g_n); ``mu`` is found by bisection.
    Returns (p, total) or (None, inf) when ``p_cap`` cannot be met.
    """
    g = np.asarray(gains, dtype=float)
    w = np.asarray(weights, dtype=float)
    if req_nats <= 0:
        return np.zeros_like(g), 0.0
    use = (g > 0) & (w > 0)
    if not np.any(use):
        return None, np.inf

    def rate(mu):
        p = np.where(use, np.maximum(0.0, w * mu - 1.0 / np.where(use, g, 1.0)), 0.0)
        return float(np.sum(np.where(use, w * np.log1p(g * p), 0.0))), p

    lo, hi = 0.0, 1.0
    while rate(hi)[0] < req_nats:
        hi *= 2.0
        if hi > 1e300:
            return None, np.inf
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if rate(mid)[0] >= req_nats:
            hi = mid
        else:
            lo = mid
    _, p = rate(hi)
    total = float(p.sum())
    if total > p_cap * (1 + 1e-9):
        return None, np.inf
    return p, total


def scalar_coefficient_closed_form(params, v_gain2, P3, d_m, t3, b=1.0):
    """|s|^2 that makes a single-element, single-subcarrier relay leg bind exactly."""
    return params.delta2 * (2.0 ** (d_m / (t3 * b * params.W)) - 1.0) / (P3 * v_gain2)


@dataclass
class GridOracleResult:
    energy: float
    A: np.ndarray | None
    B: np.ndarray | None
    P1: np.ndarray | None
    P2: np.ndarray | None
    P3: np.ndarray | None


def _assignments(K, N):
    """Every map subcarrier -> owner in {-1 (unused), 0..K-1}."""
    for owners in itertools.product(range(-1, K), repeat=N):
        X = np.zeros((K, N))
        for n, k in enumerate(owners):
            if k >= 0:
                X[k, n] = 1.0
        yield X


def _leg_grid(owned, gains, req_bits, t, W, caps, total_cap, levels, refine):
    """Least-energy per-subcarrier powers for one leg under a fixed binary assignment.

    ``owned`` is (K, N) binary; powers of unowned subcarriers are zero. Energy
    is sum_k t_k * sum_n P_kn. Every subcarrier takes ``levels`` values on
    [0, hi_n]; the search is repeated ``refine`` times on a window around the
    best point.
    """
    K, N = owned.shape
    owner = np.argmax(owned, axis=0)
    used = owned.sum(axis=0) > 0
    need = req_bits > 0
    if np.any(need & (owned.sum(axis=1) == 0)):
        return np.inf, None
    if not np.any(need):
        return 0.0, np.zeros((K, N))
    # a subcarrier never needs more than it takes to carry its owner's whole demand alone
    with np.errstate(divide="ignore", over="ignore"):
        alone = np.where(used, (2.0 ** (req_bits[owner] / (np.maximum(t[owner], 1e-300) * W)) - 1.0)
                         / np.where(gains[owner, np.arange(N)] > 0, gains[owner, np.arange(N)], np.nan), 0.0)
    alone = np.where(used & ~need[owner], 0.0, alone)
    alone = np.nan_to_num(alone, nan=np.inf)
    hi = np.minimum(alone, np.where(used, caps[owner], 0.0))
    lo = np.zeros(N)
    best = (np.inf, None)
    for _ in range(refine + 1):
        axes = [np.linspace(lo[n], hi[n], levels) if hi[n] > lo[n] else np.array([lo[n]]) for n in range(N)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, N)
        rate_bits = W * np.log2(1.0 + mesh * gains[owner, np.arange(N)][None, :])
        ok = np.ones(len(mesh), dtype=bool)
        energy = np.zeros(len(mesh))
        for k in range(K):
            mine = used & (owner == k)
            bits_k = t[k] * rate_bits[:, mine].sum(axis=1)
            ok &= bits_k >= req_bits[k] * (1 - 1e-12)
            pw = mesh[:, mine].sum(axis=1)
            ok &= pw <= caps[k] * (1 + 1e-12)
            energy += t[k] * pw
        ok &= mesh.sum(axis=1) <= total_cap * (1 + 1e-12)
        if not np.any(ok):
            if best[1] is None:
                return np.inf, None
            break
        i = int(np.argmin(np.where(ok, energy, np.inf)))
        if energy[i] < best[0]:
            best = (float(energy[i]), mesh[i].copy())
        step = np.array([(a[1] - a[0]) if len(a) > 1 else 0.0 for a in axes])
        lo = np.maximum(best[1] - step, 0.0)
        hi = np.minimum(best[1] + step, np.where(used, caps[owner], 0.0))
    P = np.zeros((K, N))
    P[owner[used], np.arange(N)[used]] = best[1][used]
    return best[0], P


def oracle_p2_grid(params, channels, alloc, grid_levels=200, refine=3):
    """Least transmit energy over all binary A, B and gridded powers, with split, slots and phases fixed.

    Only for K <= 2, N <= 2 and grid_levels <= 400.
    """
    K, N = params.K, params.N
    if K > 2 or N > 2 or grid_levels > 400:
        raise ValueError("grid oracle is limited to K <= 2, N <= 2, grid_levels <= 400")
    g12 = channels.gain_relay / params.sigma2
    g3 = np.broadcast_to(channels.cascade_gain(alloc.s) / params.delta2, (K, N))
    caps_t = np.full(K, params.P_t_max)
    best_a = (np.inf, None, None, None)
    for A in _assignments(K, N):
        e1, P1 = _leg_grid(A, g12, alloc.d_r, alloc.t1, params.W, caps_t, np.inf, grid_levels, refine)
        if not np.isfinite(e1):
            continue
        e2, P2 = _leg_grid(A, g12, alloc.d_m, alloc.t2, params.W, caps_t, np.inf, grid_levels, refine)
        if np.isfinite(e2) and e1 + e2 < best_a[0]:
            best_a = (e1 + e2, A, P1, P2)
    best_b = (np.inf, None, None)
    for B in _assignments(K, N):
        e3, P3 = _leg_grid(B, g3, alloc.d_m, alloc.t3, params.W, np.full(K, params.P_r_max), params.P_r_max,
                           grid_levels, refine)
        if e3 < best_b[0]:
            best_b = (e3, B, P3)
    total = best_a[0] + best_b[0]
    return GridOracleResult(total, best_a[1], best_b[1], best_a[2], best_a[3], best_b[2])
