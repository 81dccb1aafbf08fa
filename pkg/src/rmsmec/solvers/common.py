"""Shared pieces of the subproblem solvers: scheme restrictions and unit scaling.

Programs work in Mbit, Mbit/s, seconds, watts and GHz so that every
coefficient is O(1) at the default scale; allocations stay in bits and Hz.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..sysmodel import check_feasibility, leg_rates, total_objective

MBIT = 1e6
GHZ = 1e9


class RecoverableError(RuntimeError):
    """A block could not produce a feasible update; the driver keeps the previous iterate."""


@dataclass(frozen=True)
class Restriction:
    """Which offloading legs a scheme may use."""

    allow_relay: bool = True
    allow_mec: bool = True

    def residuals(self, alloc, params):
        D = params.D_arr
        res = {}
        if not self.allow_relay:
            res["no_relay"] = float(max(np.max(alloc.d_r / D), np.max(alloc.t1) / params.T))
        if not self.allow_mec:
            res["no_mec"] = float(max(np.max(alloc.d_m / D),
                                      np.max(alloc.t2 + alloc.t3 + alloc.t4) / params.T))
        return res


FULL = Restriction()


def rates_mbps(alloc, params, channels):
    return tuple(r / MBIT for r in leg_rates(alloc, params, channels))


def check(alloc, params, channels, restriction=FULL, tol=1e-6):
    report = check_feasibility(alloc, params, channels, tol)
    report.residuals.update(restriction.residuals(alloc, params))
    return report


def evaluate(alloc, params, channels, restriction=FULL, tol=1e-6):
    """(objective, feasible) of a candidate."""
    rep = check(alloc, params, channels, restriction, tol)
    return total_objective(alloc, params), rep.feasible


def clean_split(alloc, params, channels, restriction=FULL):
    """Snap solver output onto the constraint set.

    Clips round-off negatives, zeroes legs whose slot is shorter than 1e-9 s,
    caps offloaded bits at what the slot rates carry, rescales slots that
    overrun T by round-off, and gives the remainder to local computing.
    """
    T = params.T
    D = params.D_arr
    t = np.maximum(alloc.slots(), 0.0)
    t[t < 1e-9] = 0.0
    total = t.sum(axis=0)
    over = total > T
    t[:, over] *= T / total[over]
    R1, R2, R3 = leg_rates(alloc, params, channels)
    d_r = np.clip(alloc.d_r, 0.0, None)
    d_m = np.clip(alloc.d_m, 0.0, None)
    if not restriction.allow_relay:
        d_r[:] = 0.0
        t[0] = 0.0
    if not restriction.allow_mec:
        d_m[:] = 0.0
        t[1:] = 0.0
    d_r = np.minimum(d_r, t[0] * R1)
    d_m = np.minimum(d_m, np.minimum(t[1] * R2, t[2] * R3))
    # a MEC share with no compute slot cannot be served
    d_m[t[3] <= 0] = 0.0
    d_r[t[0] >= T] = 0.0
    d_r[d_r < 1e-9 * D] = 0.0
    d_m[d_m < 1e-9 * D] = 0.0
    d_l = D - d_r - d_m
    return alloc.replace(d_l=d_l, d_r=d_r, d_m=d_m, t1=t[0], t2=t[1], t3=t[2], t4=t[3])
