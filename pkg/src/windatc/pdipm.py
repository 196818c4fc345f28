"""Primal-dual interior point method for smooth NLPs with two-sided inequalities.

Solves::

    min  c(x)   s.t.  g(x) = 0,   h_lo <= h(x) <= h_hi

by rewriting the bounds with slacks ``h - l = h_lo``, ``h + u = h_hi`` (l, u > 0),
adding the log barrier ``-mu * sum(log l) - mu * sum(log u)`` and taking Newton
steps on the perturbed KKT system. Multipliers follow the sign convention
``z >= 0`` for the lower and ``w <= 0`` for the upper rows; the complementarity
gap is ``l.z - u.w``. Maximization problems (``maximize = True``) are handled by
minimizing ``-f``.

Any object with ``x0``, ``h_lower``, ``h_upper``, ``objective``, ``equalities``,
``inequalities`` and ``lagrangian_hessian`` can be solved; see
:class:`NonlinearProgram` for the call signatures.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

logger = logging.getLogger(__name__)

__all__ = [
    "SolverOptions",
    "IterationState",
    "Direction",
    "PdipmSolution",
    "NonlinearProgram",
    "solve",
    "newton_step",
    "step_lengths",
    "update_barrier",
    "complementarity_gap",
    "write_trace",
]

_DENSE_LIMIT = 500
_REGULARIZATION = 1e-8
_SHIFT_FIRST = 1e-6
_SHIFT_MAX = 1e6
_SOLVE_RTOL = 1e-10


@dataclass(frozen=True)
class SolverOptions:
    gap_tol: float = 1e-6
    feas_tol: float = 1e-6
    max_iters: int = 100
    centering_sigma: float = 0.1
    step_fraction: float = 0.9995
    initial_slack_margin: float = 1.0

    def __post_init__(self):
        if not 0 < self.centering_sigma < 1:
            raise ValueError("centering_sigma must lie in (0, 1)")
        if not 0 < self.step_fraction < 1:
            raise ValueError("step_fraction must lie in (0, 1)")
        if self.initial_slack_margin <= 0:
            raise ValueError("initial_slack_margin must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class NonlinearProgram:
    """Callable-backed problem, convenient for small analytic programs.

    ``objective(x) -> (f, grad)``, ``equalities(x) -> (g, J)``,
    ``inequalities(x) -> (h, J)`` and
    ``lagrangian_hessian(x, eq_mult, ineq_mult, obj_weight)`` returning the
    Hessian of ``obj_weight*f + eq_mult.g + ineq_mult.h``.
    """

    x0: np.ndarray
    objective: Callable
    equalities: Callable
    inequalities: Callable
    lagrangian_hessian: Callable
    h_lower: np.ndarray
    h_upper: np.ndarray
    maximize: bool = False


@dataclass
class IterationState:
    x: np.ndarray
    l: np.ndarray
    u: np.ndarray
    y: np.ndarray
    z: np.ndarray
    w: np.ndarray
    mu: float = 0.0

    @property
    def gap(self) -> float:
        return complementarity_gap(self.l, self.u, self.z, self.w)


@dataclass
class Direction:
    dx: np.ndarray
    dl: np.ndarray
    du: np.ndarray
    dy: np.ndarray
    dz: np.ndarray
    dw: np.ndarray
    regularized: bool = False
    hessian_shift: float = 0.0

    def norm(self) -> float:
        return float(np.linalg.norm(np.concatenate(
            [self.dx, self.dl, self.du, self.dy, self.dz, self.dw])))


@dataclass
class PdipmSolution:
    x: np.ndarray
    objective: float  # in the problem's own sense and units
    y: np.ndarray
    z: np.ndarray
    w: np.ndarray
    l: np.ndarray
    u: np.ndarray
    status: str  # "converged" | "iteration_limit" | "numerical_failure"
    iterations: int
    trace: list[dict] = field(default_factory=list)
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def gap(self) -> float:
        return complementarity_gap(self.l, self.u, self.z, self.w)


def complementarity_gap(l, u, z, w) -> float:
    return float(np.dot(l, z) - np.dot(u, w))


def update_barrier(gap: float, centering_sigma: float, n_ineq: int) -> float:
    """mu = sigma * gap / (2 * n_ineq)."""
    if n_ineq == 0:
        return 0.0
    return centering_sigma * max(gap, 0.0) / (2 * n_ineq)


def step_lengths(state: IterationState, direction: Direction,
                 step_fraction: float) -> tuple[float, float]:
    """Fraction-to-boundary primal and dual step lengths, capped at 1."""

    def ratio(v, dv):
        neg = dv < 0
        if not np.any(neg):
            return 1.0
        with np.errstate(over="ignore"):  # tiny dv: ratio is inf, capped below
            return min(1.0, step_fraction * float(np.min(-v[neg] / dv[neg])))

    alpha_p = min(ratio(state.l, direction.dl), ratio(state.u, direction.du))
    alpha_d = min(ratio(state.z, direction.dz), ratio(-state.w, -direction.dw))
    return alpha_p, alpha_d


class _Evaluator:
    """Wraps a problem in the internal minimization sign convention."""

    def __init__(self, problem):
        self.p = problem
        self.sign = -1.0 if getattr(problem, "maximize", False) else 1.0
        self.h_lo = np.asarray(problem.h_lower, float)
        self.h_hi = np.asarray(problem.h_upper, float)
        if np.any(self.h_lo > self.h_hi):
            raise ValueError("inequality bounds cross (lower > upper)")
        if not (np.all(np.isfinite(self.h_lo)) and np.all(np.isfinite(self.h_hi))):
            raise ValueError("inequality bounds must be finite")

    def at(self, x):
        f, df = self.p.objective(x)
        g, Jg = self.p.equalities(x)
        h, Jh = self.p.inequalities(x)
        return self.sign * f, self.sign * np.asarray(df), np.asarray(g), np.atleast_2d(Jg), \
            np.asarray(h), np.atleast_2d(Jh)

    def hessian(self, x, y, z, w):
        # internal Lagrangian: c(x) - y.g - (z + w).h
        return self.p.lagrangian_hessian(x, -y, -(z + w), self.sign)


def _residuals(state, ev_point, h_lo, h_hi):
    _, dc, g, Jg, h, Jh = ev_point
    Lx = dc - Jg.T @ state.y - Jh.T @ (state.z + state.w)
    Lz = h - state.l - h_lo
    Lw = h + state.u - h_hi
    return Lx, g, Lz, Lw


def newton_step(state: IterationState, problem, ev_point=None, hessian=None,
                _ev: _Evaluator | None = None) -> Direction:
    """Newton direction for the barrier KKT system at barrier ``state.mu``.

    The slack and bound-multiplier blocks are eliminated, leaving the
    symmetric indefinite system ``[[H + Jh' D Jh, -Jg'], [-Jg, 0]]``.
    When the matrix lacks inertia ``(n, m, 0)`` the Hessian block is shifted
    by a growing multiple of the identity so the step is a descent direction
    for nonconvex problems. A singular system is retried once with diagonal
    regularization.
    """
    ev = _ev or _Evaluator(problem)
    if np.any(state.l <= 0) or np.any(state.u <= 0):
        raise ValueError("slacks must be strictly positive")
    if ev_point is None:
        ev_point = ev.at(state.x)
    if hessian is None:
        hessian = ev.hessian(state.x, state.y, state.z, state.w)
    _, _, g, Jg, _, Jh = ev_point
    Lx, g, Lz, Lw = _residuals(state, ev_point, ev.h_lo, ev.h_hi)
    mu = state.mu
    l, u, z, w = state.l, state.u, state.z, state.w
    Ll = l * z - mu
    Lu = u * w + mu

    d = z / l - w / u
    Hp = hessian + (Jh.T * d) @ Jh
    rhs_x = -Lx - Jh.T @ ((Ll + z * Lz) / l + (Lu - w * Lw) / u)
    n, m = len(state.x), len(g)
    K = np.block([[Hp, -Jg.T], [-Jg, np.zeros((m, m))]])
    rhs = np.concatenate([rhs_x, g])

    shift = _inertia_shift(K, n, m)
    if shift:
        K[np.arange(n), np.arange(n)] += shift
    sol, regularized = _solve_kkt(K, rhs, n)
    dx, dy = sol[:n], sol[n:]
    dl = Lz + Jh @ dx
    du = -Lw - Jh @ dx
    dz = -(Ll + z * dl) / l
    dw = -(Lu + w * du) / u
    return Direction(dx, dl, du, dy, dz, dw, regularized, shift)


def _inertia(A) -> tuple[int, int]:
    """Counts of positive and negative eigenvalues, from an LDL' factorization."""
    _, D, _ = scipy.linalg.ldl(A)
    # plain sign counts: a relative zero threshold misfires once z/l is huge
    ev = np.linalg.eigvalsh(D)
    return int(np.sum(ev > 0)), int(np.sum(ev < 0))


def _inertia_shift(K, n, m) -> float:
    """Smallest tried multiple of I for the Hessian block giving inertia (n, m, 0)."""
    if len(K) > _DENSE_LIMIT or _inertia(K) == (n, m):
        return 0.0
    shift = _SHIFT_FIRST
    A = K.copy()
    diag = np.arange(n)
    while shift <= _SHIFT_MAX:
        A[diag, diag] = K[diag, diag] + shift
        if _inertia(A) == (n, m):
            return shift
        shift *= 10
    # constraint Jacobian rank deficient; leave the matrix alone
    return 0.0


class SingularKKTError(np.linalg.LinAlgError):
    pass


def _solve_kkt(K, rhs, n):
    for attempt in range(2):
        A = K
        if attempt:
            A = K.copy()
            A[np.arange(n), np.arange(n)] += _REGULARIZATION
            idx = np.arange(n, len(K))
            A[idx, idx] -= _REGULARIZATION
        try:
            if len(K) > _DENSE_LIMIT:
                sol = scipy.sparse.linalg.spsolve(scipy.sparse.csc_matrix(A), rhs)
            else:
                # ill-conditioning is normal near degenerate optima; judge by residual
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                    sol = scipy.linalg.solve(A, rhs, assume_a="sym")
        except (np.linalg.LinAlgError, ValueError):
            continue
        if not np.all(np.isfinite(sol)):
            continue
        scale = np.linalg.norm(rhs) + np.linalg.norm(A, np.inf) * np.linalg.norm(sol)
        if np.linalg.norm(A @ sol - rhs) <= _SOLVE_RTOL * max(scale, 1e-300):
            return sol, bool(attempt)
    if not np.all(np.isfinite(K)):
        raise SingularKKTError("KKT matrix has non-finite entries")
    cond = np.linalg.cond(K)
    raise SingularKKTError(f"KKT matrix singular after regularization (cond={cond:.3e})")


def initial_state(problem, options: SolverOptions, ev: _Evaluator | None = None) -> IterationState:
    ev = ev or _Evaluator(problem)
    x = np.array(problem.x0, dtype=float)
    _, _, g, _, h, _ = ev.at(x)
    margin = options.initial_slack_margin
    l = np.maximum(h - ev.h_lo, margin)
    u = np.maximum(ev.h_hi - h, margin)
    r = len(h)
    state = IterationState(x, l, u, np.zeros(len(g)), np.ones(r), -np.ones(r))
    state.mu = update_barrier(state.gap, options.centering_sigma, r)
    return state


def solve(problem, options: SolverOptions | None = None) -> PdipmSolution:
    """Run the interior point iteration until the gap and residuals meet tolerance."""
    opts = options or SolverOptions()
    ev = _Evaluator(problem)
    st = initial_state(problem, opts, ev)
    r = len(st.l)
    mu_floor = 0.1 * opts.gap_tol / (2 * r) if r else 0.0
    trace: list[dict] = []
    status, message = "iteration_limit", f"no convergence in {opts.max_iters} iterations"
    it = 0
    while True:
        point = ev.at(st.x)
        Lx, g, Lz, Lw = _residuals(st, point, ev.h_lo, ev.h_hi)
        eq_res = float(np.max(np.abs(g), initial=0.0))
        ineq_res = float(max(np.max(np.abs(Lz), initial=0.0), np.max(np.abs(Lw), initial=0.0)))
        stat_res = float(np.max(np.abs(Lx), initial=0.0))
        gap = st.gap
        obj = ev.sign * point[0]
        trace.append(dict(iter=it, gap=gap, eq_residual=eq_res, ineq_violation=ineq_res,
                          stationarity=stat_res, objective=obj, mu=st.mu))
        logger.debug("iter %3d gap %.3e eq %.3e ineq %.3e stat %.3e obj %.6f",
                     it, gap, eq_res, ineq_res, stat_res, obj)
        if (gap < opts.gap_tol and eq_res < opts.feas_tol and ineq_res < opts.feas_tol
                and stat_res < opts.feas_tol):
            status, message = "converged", ""
            break
        if it >= opts.max_iters:
            break
        if not all(np.isfinite([gap, eq_res, ineq_res, stat_res])):
            status, message = "numerical_failure", f"non-finite residuals at iteration {it}"
            break
        # floor keeps z/l bounded once the gap is below tolerance
        st.mu = max(update_barrier(gap, opts.centering_sigma, r), mu_floor)
        H = ev.hessian(st.x, st.y, st.z, st.w)
        try:
            d = newton_step(st, problem, point, H, _ev=ev)
        except SingularKKTError as exc:
            status, message = "numerical_failure", f"iteration {it}: {exc}"
            break
        ap, ad = step_lengths(st, d, opts.step_fraction)
        st.x = st.x + ap * d.dx
        st.l = st.l + ap * d.dl
        st.u = st.u + ap * d.du
        st.y = st.y + ad * d.dy
        st.z = st.z + ad * d.dz
        st.w = st.w + ad * d.dw
        it += 1

    f, _ = problem.objective(st.x)
    return PdipmSolution(st.x, float(f), st.y, st.z, st.w, st.l, st.u, status, it, trace, message)


def write_trace(solution: PdipmSolution, path) -> None:
    """Iteration trace as CSV: ``iter,gap,eq_residual,ineq_violation,objective``."""
    cols = ["iter", "gap", "eq_residual", "ineq_violation", "objective"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(cols)
        for row in solution.trace:
            wr.writerow([row["iter"]] + [f"{row[c]:.12g}" for c in cols[1:]])
