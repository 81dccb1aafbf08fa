"""Convex-program container, cone encodings and the SCA/DC linearizations.

Programs are modeled with cvxpy and solved by an interior-point conic backend
(Clarabel by default). The helpers here fix the exact cone decompositions:
exponential cone for the perspective-log rate, 3-d power cone for the
cubic-over-square computing energy.
"""

from __future__ import annotations

import io
import time
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .sysmodel import share_log

LN2 = np.log(2.0)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_LIMIT = "numerical_limit"


class BilinearError(ValueError):
    """Both the slot length and the rate variables were left free."""


@dataclass
class SolverSettings:
    solver: str = "CLARABEL"
    tol_gap: float = 1e-8
    tol_feas: float = 1e-8
    max_iter: int = 200
    verbose: bool = False
    accept_inaccurate: bool = True

    def backend_options(self):
        if self.solver == "CLARABEL":
            return dict(tol_gap_abs=self.tol_gap, tol_gap_rel=self.tol_gap, tol_feas=self.tol_feas,
                        max_iter=self.max_iter)
        if self.solver == "SCS":
            return dict(eps_abs=self.tol_feas, eps_rel=self.tol_gap, max_iters=100 * self.max_iter)
        if self.solver == "CVXOPT":
            return dict(abstol=self.tol_gap, reltol=self.tol_gap, feastol=self.tol_feas,
                        maxiters=self.max_iter)
        return {}


@dataclass
class SolveOutcome:
    status: str
    values: dict = field(default_factory=dict)
    objective: float = float("nan")
    iterations: int = 0
    residual: float = float("nan")
    seconds: float = 0.0
    message: str = ""

    @property
    def ok(self):
        return self.status == OPTIMAL


class ConicProgram:
    """Named variables, parameters and constraints of one convex program.

    The cvxpy problem is compiled on first solve and reused afterwards, so a
    program built once can be re-solved with new parameter values cheaply.
    """

    def __init__(self, name="program"):
        self.name = name
        self.variables = {}
        self.parameters = {}
        self.constraints = []
        self.objective_terms = []
        self.sense = "min"
        self._problem = None

    # declarations
    def var(self, name, shape=(), nonneg=False):
        v = cp.Variable(shape, name=name, nonneg=nonneg)
        self.variables[name] = v
        return v

    def hermitian_psd(self, name, M):
        S = cp.Variable((M, M), hermitian=True, name=name)
        self.variables[name] = S
        self.constraints.append(S >> 0)
        return S

    def param(self, name, shape=(), nonneg=False, value=None):
        p = cp.Parameter(shape, name=name, nonneg=nonneg)
        if value is not None:
            p.value = value
        self.parameters[name] = p
        return p

    def add(self, *constraints):
        self._check_alive()
        self.constraints.extend(constraints)
        return constraints[0] if len(constraints) == 1 else constraints

    def minimize(self, expr):
        self._check_alive()
        self.objective_terms.append(expr)

    def _check_alive(self):
        if self._problem is not None:
            raise RuntimeError("program already compiled; build a new one")

    def set(self, **values):
        for key, val in values.items():
            self.parameters[key].value = val

    @property
    def problem(self):
        if self._problem is None:
            obj = sum(self.objective_terms) if self.objective_terms else cp.Constant(0.0)
            self._problem = cp.Problem(cp.Minimize(obj), self.constraints)
        return self._problem

    def dump(self, solver="SCS"):
        """Sparse conic data (c, A, b, cone sizes) as a columnar text block."""
        data, _, _ = self.problem.get_problem_data(solver)
        A = data["A"].tocoo()
        buf = io.StringIO()
        dims = data["dims"]
        buf.write(f"# program {self.name}\n# cones {dims}\n")
        buf.write(f"# shape {A.shape[0]} {A.shape[1]}\n")
        for i, v in enumerate(np.asarray(data["c"]).ravel()):
            if v:
                buf.write(f"c,{i},{v!r}\n")
        for i, v in enumerate(np.asarray(data["b"]).ravel()):
            if v:
                buf.write(f"b,{i},{v!r}\n")
        for r, c_, v in zip(A.row, A.col, A.data):
            buf.write(f"A,{r},{c_},{v!r}\n")
        return buf.getvalue()


def _status_of(problem_status):
    if problem_status in (cp.OPTIMAL,):
        return OPTIMAL
    if problem_status in (cp.OPTIMAL_INACCURATE,):
        return "optimal_inaccurate"
    if problem_status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return INFEASIBLE
    if problem_status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
        return UNBOUNDED
    return NUMERICAL_LIMIT


def constraint_residual(problem):
    worst = 0.0
    for con in problem.constraints:
        try:
            viol = con.violation()
        except (ValueError, TypeError, AttributeError):
            continue
        if viol is None:
            continue
        worst = max(worst, float(np.max(np.atleast_1d(viol))))
    return worst


def solve(prog, settings=None):
    """Solve ``prog`` and map the backend status onto :class:`SolveOutcome`."""
    settings = settings or SolverSettings()
    problem = prog.problem if isinstance(prog, ConicProgram) else prog
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            # the cached backend cannot absorb sparsity changes between parameter values
            problem.solve(solver=settings.solver, verbose=settings.verbose, warm_start=False,
                          **settings.backend_options())
    except cp.error.SolverError as exc:
        return SolveOutcome(NUMERICAL_LIMIT, seconds=time.perf_counter() - t0, message=str(exc))
    seconds = time.perf_counter() - t0
    status = _status_of(problem.status)
    stats = problem.solver_stats
    iters = int(getattr(stats, "num_iters", 0) or 0)
    if status == "optimal_inaccurate":
        status = OPTIMAL if settings.accept_inaccurate else NUMERICAL_LIMIT
    if status != OPTIMAL:
        return SolveOutcome(status, iterations=iters, seconds=seconds, message=str(problem.status))
    variables = prog.variables if isinstance(prog, ConicProgram) else {v.name(): v for v in problem.variables()}
    values = {k: (None if v.value is None else np.array(v.value)) for k, v in variables.items()}
    return SolveOutcome(OPTIMAL, values, float(problem.value), iters, constraint_residual(problem),
                        seconds, str(problem.status))


# ---------------------------------------------------------------- cone encodings

def perspective_log(a, p_tilde, gain):
    """a ln(1 + gain p~/a) as an exponential-cone expression (jointly concave)."""
    return -cp.rel_entr(a, a + cp.multiply(gain, p_tilde))


def _is_free(x):
    return isinstance(x, cp.Expression) and not x.is_constant()


def add_perspective_rate_constraint(prog, d, t, a, p_tilde, gamma, noise, W):
    """Encode d <= t * sum_n a_n W log2(1 + p~_n gamma_n / (a_n noise)).

    With ``t`` fixed and shares/powers free the rate is an exponential-cone
    expression. With shares and powers fixed the rate is a number R and the
    constraint is linear, d <= t R. Leaving both sides free is bilinear.
    """
    if _is_free(t) and (_is_free(a) or _is_free(p_tilde)):
        raise BilinearError("slot length and rate variables cannot both be free")
    if _is_free(a) or _is_free(p_tilde):
        t_val = float(t.value) if isinstance(t, cp.Expression) else float(t)
        if t_val <= 0:
            raise ValueError("slot length must be positive when shares/powers are free")
        gain = np.asarray(gamma, dtype=float) / noise
        rate_nats = cp.sum(perspective_log(a, p_tilde, gain))
        return prog.add(rate_nats * (W / LN2) * t_val >= d)
    a_v = np.asarray(a.value if isinstance(a, cp.Expression) else a, dtype=float)
    p_v = np.asarray(p_tilde.value if isinstance(p_tilde, cp.Expression) else p_tilde, dtype=float)
    R = float(np.sum(W * share_log(a_v, p_v * np.asarray(gamma) / noise) / LN2))
    return prog.add(d <= t * R)


def add_cubic_over_square_epigraph(prog, u, coeff, d, denom):
    """Constrain u >= coeff * d^3 / denom^2 for d >= 0.

    A numeric ``denom`` gives a plain cubic; a cvxpy ``denom`` (a parameter T or
    an affine T - t1) goes through the 3-d power cone w^(1/3) denom^(2/3) >= |d|.
    """
    if not isinstance(denom, cp.Expression):
        if denom <= 0:
            raise ValueError("denominator must be positive")
        return prog.add(coeff / float(denom) ** 2 * cp.power(d, 3) <= u)
    w = cp.Variable(d.shape, nonneg=True)
    if denom.shape != d.shape:
        denom = cp.multiply(np.ones(d.shape), denom)
    if d.shape == (1,):
        # cvxpy's cone rejects length-1 vector arguments
        cone = cp.PowCone3D(w[0], denom[0], d[0], 1.0 / 3.0)
    else:
        cone = cp.PowCone3D(w, denom, d, 1.0 / 3.0)
    return prog.add(cone, coeff * w <= u)


# ---------------------------------------------------------------- linearizations

@dataclass(frozen=True)
class SpectralLinearization:
    """Affine minorant S -> norm0 + tr(u u^H (S - S_prev)) of the spectral norm."""

    norm0: float
    u: np.ndarray
    S_prev: np.ndarray

    @property
    def U(self):
        return np.outer(self.u, self.u.conj())

    def __call__(self, S):
        return float(self.norm0 + np.real(self.u.conj() @ (S - self.S_prev) @ self.u))


def linearize_spectral_norm(S_prev):
    S_prev = np.asarray(S_prev)
    H = (S_prev + S_prev.conj().T) / 2
    w, Q = np.linalg.eigh(H)
    # eigh sorts ascending; on ties the last index is the deterministic pick
    return SpectralLinearization(float(w[-1]), Q[:, -1], S_prev)


def taylor_ratio_upper(d0, t0, d, t, c, T):
    """First-order expansion of c d / (T - t) at (d0, t0)."""
    rem = T - t0
    return c * d0 / rem + c / rem * (d - d0) + c * d0 / rem ** 2 * (t - t0)


def taylor_ratio_upper_mec(d0, t0, d, t, c):
    """First-order expansion of c d / t at (d0, t0)."""
    return c * d0 / t0 + c / t0 * (d - d0) - c * d0 / t0 ** 2 * (t - t0)


def hermitian_embedding(H):
    """Real symmetric [[Re, -Im], [Im, Re]] form of a Hermitian matrix."""
    H = np.asarray(H)
    return np.block([[H.real, -H.imag], [H.imag, H.real]])
