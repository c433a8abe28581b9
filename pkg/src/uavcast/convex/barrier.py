"""Log-barrier interior-point solver with damped Newton steps.

The barrier subproblem at parameter t minimizes t*f(x) - sum log(-g_i(x))
over the linear-equality manifold. Each Newton step solves one sparse
symmetric system in lifted form,

    [ H    A'   J' ] [dx]   [-grad]
    [ A    0    0  ] [w ] = [-r_eq]
    [ J    0   -D  ] [u ]   [  0  ]

where H carries the objective and constraint curvature, J stacks the
constraint gradients and D = diag(g_i^2). Eliminating u recovers the
dense barrier Hessian H + J' D^-1 J without ever forming its rank-one
outer products, so near-banded problems stay sparse end to end. Small
equality residuals in the start point are driven out by the residual term
(infeasible-start Newton); inequality starts must be strictly feasible,
with :func:`phase_one` available to produce one.

The stage schedule multiplies t by 10 until m/t falls below the gap
tolerance. Line search is plain backtracking with parameters (0.25, 0.5);
once the Newton decrement is inside the quadratic-convergence region the
solver switches to feasibility-guarded full steps, which sidesteps
floating-point noise in the merit comparison at large t.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .program import (
    ConstraintBlock,
    LinearObjective,
    SmoothConvexProgram,
    SolveReport,
)

__all__ = ["SolverOptions", "InfeasibleError", "solve", "phase_one", "check_gradients"]


class InfeasibleError(RuntimeError):
    """No strictly feasible point exists (phase-I certificate)."""


@dataclass
class SolverOptions:
    t0: float = 1.0
    t_factor: float = 10.0
    gap_tol: float = 1e-8          # stop when n_ineq / t <= gap_tol
    newton_tol: float = 1e-9       # stage ends when decrement^2 / 2 <= newton_tol
    max_newton: int = 200          # per barrier stage
    max_stages: int = 60
    ls_alpha: float = 0.25
    ls_beta: float = 0.5
    eq_tol: float = 1e-8
    kkt_tol: float = 1e-6
    # decrement^2 below which guarded full steps replace the merit line search
    # (kept tiny: the merit comparison carries its own noise allowance)
    full_step_threshold: float = 1e-6
    trace: bool = False
    early_stop: Callable[[np.ndarray], bool] | None = None


def _barrier_value(program: SmoothConvexProgram, x: np.ndarray, t: float) -> float:
    """t*f(x) - sum log(-g(x)); +inf outside the strictly feasible region."""
    vals = program.ineq_values(x)
    if vals.size and (not np.all(np.isfinite(vals)) or np.max(vals) >= 0.0):
        return np.inf
    fx = t * program.objective.value(x)
    if vals.size:
        fx -= float(np.sum(np.log(-vals)))
    return fx


def _assemble(program, x, t, reg):
    """Build the lifted Newton system at x. Returns (M, rhs, grad_psi, parts)."""
    n = program.n
    f_grad = program.objective.gradient(x)
    f_hess = program.objective.hessian(x)

    blocks = program.inequalities
    g_parts = [np.asarray(b.values(x), dtype=float) for b in blocks]
    jac_parts = [b.jacobian(x) for b in blocks]

    h_loc = t * f_hess if f_hess is not None else None
    grad_psi = t * f_grad
    for b, g in zip(blocks, g_parts):
        hb = b.hessian_combination(x, 1.0 / (-g))
        if hb is not None:
            h_loc = hb if h_loc is None else h_loc + hb
    if h_loc is None:
        h_loc = sp.csr_matrix((n, n))
    if reg > 0.0:
        h_loc = h_loc + reg * sp.identity(n, format="csr")

    if g_parts:
        g = np.concatenate(g_parts)
        jac = sp.vstack(jac_parts, format="csr")
        grad_psi = grad_psi + jac.T @ (1.0 / (-g))
    else:
        g = np.empty(0)
        jac = None

    a_mat = program.eq_matrix
    r_pri = (a_mat @ x - program.eq_rhs) if a_mat is not None else np.empty(0)

    if a_mat is not None and jac is not None:
        m_kkt = sp.bmat(
            [
                [h_loc, a_mat.T, jac.T],
                [a_mat, None, None],
                [jac, None, -sp.diags(g**2)],
            ],
            format="csc",
        )
        rhs = np.concatenate([-grad_psi, -r_pri, np.zeros(g.size)])
    elif a_mat is not None:
        m_kkt = sp.bmat([[h_loc, a_mat.T], [a_mat, None]], format="csc")
        rhs = np.concatenate([-grad_psi, -r_pri])
    elif jac is not None:
        m_kkt = sp.bmat([[h_loc, jac.T], [jac, -sp.diags(g**2)]], format="csc")
        rhs = np.concatenate([-grad_psi, np.zeros(g.size)])
    else:
        m_kkt = sp.csc_matrix(h_loc)
        rhs = -grad_psi
    return m_kkt, rhs, grad_psi, r_pri, jac, g


def _boundary_step(jac, g, dx) -> float:
    """First-order fraction-to-boundary cap on the step length.

    Estimates the largest alpha keeping every g_i + alpha * (J dx)_i
    negative and backs off to 99% of it; exact for affine constraints,
    a good warm start for the merit search otherwise.
    """
    if jac is None:
        return 1.0
    jdx = jac @ dx
    increasing = jdx > 0.0
    if not np.any(increasing):
        return 1.0
    alpha_max = float(np.min(-g[increasing] / jdx[increasing]))
    return min(1.0, 0.99 * alpha_max)


def _newton_stage(program, x, t, options, trace, stage_idx, state):
    """Center at barrier parameter t. Mutates x in place; returns iterations."""
    n = program.n
    p = program.n_eq
    iters = 0
    prev_dec = np.inf
    stalls = 0
    for _ in range(options.max_newton):
        reg = 0.0
        dx = w_eq = None
        dec_sq = np.nan
        for _attempt in range(4):
            m_kkt, rhs, grad_psi, r_pri, jac, g = _assemble(program, x, t, reg)
            try:
                sol = spla.splu(m_kkt).solve(rhs)
            except RuntimeError:
                reg = 1e-10 if reg == 0.0 else reg * 1e4
                continue
            if not np.all(np.isfinite(sol)):
                reg = 1e-10 if reg == 0.0 else reg * 1e4
                continue
            dx = sol[:n]
            w_eq = sol[n : n + p]
            dec_sq = float(-grad_psi @ dx)
            eq_res = float(np.max(np.abs(r_pri))) if r_pri.size else 0.0
            if dec_sq < 0.0 and eq_res <= options.eq_tol:
                # indefinite system (numerical); regularize and retry
                reg = 1e-10 if reg == 0.0 else reg * 1e4
                dx = None
                continue
            break
        if dx is None:
            break
        state["w_eq"] = w_eq
        if options.trace:
            trace.append((stage_idx, iters, program.objective.value(x), dec_sq))
        if dec_sq / 2.0 <= options.newton_tol and eq_res <= options.eq_tol:
            return iters
        # centering saturates at the floating-point floor near very active
        # boundaries; stop the stage once the decrement stops shrinking
        if dec_sq < 1e-4 and dec_sq > 0.5 * prev_dec:
            stalls += 1
            if stalls >= 3:
                return iters
        else:
            stalls = 0
        prev_dec = dec_sq

        alpha0 = _boundary_step(jac, g, dx)
        if dec_sq <= options.full_step_threshold and eq_res <= options.eq_tol:
            # quadratic region: full step, shrink only to stay strictly feasible
            alpha = alpha0
            for _ in range(80):
                if np.isfinite(_barrier_value(program, x + alpha * dx, t)):
                    break
                alpha *= options.ls_beta
            else:
                return iters
        else:
            psi0 = _barrier_value(program, x, t)
            slope = -dec_sq
            noise = 1e-12 * (1.0 + abs(psi0))
            alpha = alpha0
            accepted = False
            for _ in range(80):
                trial = _barrier_value(program, x + alpha * dx, t)
                if np.isfinite(trial) and (
                    trial <= psi0 + options.ls_alpha * alpha * slope + noise
                    or eq_res > options.eq_tol
                ):
                    accepted = True
                    break
                alpha *= options.ls_beta
            if not accepted:
                return iters

        if np.max(np.abs(alpha * dx)) <= 1e-15 * (1.0 + np.max(np.abs(x))):
            return iters
        x += alpha * dx
        iters += 1
        if options.early_stop is not None and options.early_stop(x):
            state["early_stop"] = True
            return iters
    return iters


def solve(
    program: SmoothConvexProgram,
    start: np.ndarray,
    options: SolverOptions | None = None,
) -> SolveReport:
    """Run the barrier method from a strictly feasible start.

    The start must satisfy every inequality strictly; equality residuals up
    to line-search repairable size are tolerated and eliminated by the
    Newton iterations. Status is 'optimal' only when the duality gap,
    equality residual and KKT residual all meet their tolerances.
    """
    options = options or SolverOptions()
    x = np.array(start, dtype=float)
    if x.shape != (program.n,):
        raise ValueError(f"start must have shape ({program.n},)")
    if not program.strictly_feasible(x):
        raise ValueError("start point is not strictly feasible; run phase_one first")

    m = program.n_ineq
    trace: list = []
    state: dict = {"w_eq": np.empty(0), "early_stop": False}
    total_newton = 0
    stages = 0
    status = "optimal"

    t = options.t0
    while True:
        total_newton += _newton_stage(program, x, t, options, trace, stages, state)
        stages += 1
        if state["early_stop"]:
            break
        if m == 0 or m / t <= options.gap_tol:
            break
        if stages >= options.max_stages:
            status = "max_iter"
            break
        t *= options.t_factor

    gap = m / t if m else 0.0
    vals = program.ineq_values(x)
    max_violation = float(np.max(vals)) if vals.size else -np.inf
    eq_res = program.eq_residual(x)

    # stationarity certificate from the barrier multipliers
    f_grad = program.objective.gradient(x)
    r_stat = f_grad.copy()
    if vals.size:
        jac = sp.vstack([b.jacobian(x) for b in program.inequalities], format="csr")
        r_stat = r_stat + jac.T @ (1.0 / (t * (-vals)))
    if program.eq_matrix is not None and state["w_eq"].size:
        r_stat = r_stat + program.eq_matrix.T @ (state["w_eq"] / t)
    # complementarity of the barrier multipliers is 1/t per constraint; the
    # duality gap m/t is reported separately
    kkt = max(float(np.max(np.abs(r_stat))), eq_res, (1.0 / t) if m else 0.0)

    if status == "optimal" and not state["early_stop"]:
        if eq_res > options.eq_tol or max_violation >= 0.0 or kkt > options.kkt_tol:
            status = "max_iter"

    return SolveReport(
        x=x,
        objective=program.objective.value(x),
        status=status,
        max_violation=max_violation,
        eq_residual=eq_res,
        kkt_residual=kkt,
        gap=gap,
        newton_iters=total_newton,
        barrier_stages=stages,
        trace=trace,
    )


class _ShiftedBlock(ConstraintBlock):
    """g_i(x) - s <= 0 over the augmented variable (x, s)."""

    def __init__(self, inner: ConstraintBlock, n: int):
        self.inner = inner
        self.n = n

    @property
    def size(self):
        return self.inner.size

    def values(self, xs):
        return np.asarray(self.inner.values(xs[:-1]), dtype=float) - xs[-1]

    def jacobian(self, xs):
        jac = sp.csr_matrix(self.inner.jacobian(xs[:-1]))
        ones = -np.ones((self.size, 1))
        return sp.hstack([jac, sp.csr_matrix(ones)], format="csr")

    def hessian_combination(self, xs, w):
        hb = self.inner.hessian_combination(xs[:-1], w)
        if hb is None:
            return None
        return sp.block_diag([hb, sp.csr_matrix((1, 1))], format="csr")


class _SlackBound(ConstraintBlock):
    """-s - 1 <= 0, bounding the phase-I epigraph variable from below."""

    def __init__(self, n: int):
        self.n = n

    @property
    def size(self):
        return 1

    def values(self, xs):
        return np.array([-xs[-1] - 1.0])

    def jacobian(self, xs):
        row = np.zeros((1, self.n + 1))
        row[0, -1] = -1.0
        return sp.csr_matrix(row)


def _project_equalities(program, x):
    a_mat = program.eq_matrix
    if a_mat is None:
        return x
    r = program.eq_rhs - a_mat @ x
    if np.max(np.abs(r)) <= 1e-12:
        return x
    gram = (a_mat @ a_mat.T).tocsc()
    return x + a_mat.T @ spla.splu(gram).solve(r)


def phase_one(
    program: SmoothConvexProgram,
    hint: np.ndarray,
    options: SolverOptions | None = None,
) -> np.ndarray:
    """Return a strictly feasible point, or raise :class:`InfeasibleError`.

    A hint that is already strictly feasible (and on the equality manifold)
    is returned unchanged. Otherwise the slack-minimization problem
    min s s.t. g_i(x) <= s, A x = b is solved, terminating early as soon as
    the slack certifies strict feasibility.
    """
    options = options or SolverOptions()
    hint = np.array(hint, dtype=float)
    if program.eq_residual(hint) <= options.eq_tol and program.strictly_feasible(hint):
        return hint

    x0 = _project_equalities(program, hint)
    vals = program.ineq_values(x0)
    if vals.size == 0 or (np.all(np.isfinite(vals)) and np.max(vals) < 0.0):
        return x0

    n = program.n
    finite_max = np.max(vals[np.isfinite(vals)]) if np.any(np.isfinite(vals)) else 1.0
    s0 = max(finite_max + max(1e-3, 0.05 * abs(finite_max)), -0.5)
    margin = 1e-6 * (1.0 + abs(finite_max))

    aug_eq = None
    aug_rhs = None
    if program.eq_matrix is not None:
        aug_eq = sp.hstack(
            [program.eq_matrix, sp.csr_matrix((program.n_eq, 1))], format="csr"
        )
        aug_rhs = program.eq_rhs

    aug = SmoothConvexProgram(
        n=n + 1,
        objective=LinearObjective(np.eye(n + 1)[-1]),
        inequalities=[_ShiftedBlock(b, n) for b in program.inequalities]
        + [_SlackBound(n)],
        eq_matrix=aug_eq,
        eq_rhs=aug_rhs,
    )

    def _feasible_enough(xs: np.ndarray) -> bool:
        v = program.ineq_values(xs[:-1])
        return bool(np.all(np.isfinite(v)) and np.max(v) < -margin)

    p1_options = SolverOptions(
        t0=options.t0,
        t_factor=options.t_factor,
        gap_tol=max(options.gap_tol, 1e-9),
        newton_tol=options.newton_tol,
        max_newton=options.max_newton,
        max_stages=options.max_stages,
        eq_tol=options.eq_tol,
        early_stop=_feasible_enough,
    )
    start = np.concatenate([x0, [s0]])
    report = solve(aug, start, p1_options)
    x = report.x[:-1]
    v = program.ineq_values(x)
    if np.all(np.isfinite(v)) and np.max(v) < 0.0:
        return x
    raise InfeasibleError(
        f"phase-I finished with slack {report.x[-1]:.3e}; no strictly feasible point"
    )


def check_gradients(program: SmoothConvexProgram, x: np.ndarray, h: float = 1e-5) -> float:
    """Max relative mismatch between analytic and central-difference gradients.

    Covers the objective and every inequality constraint. Relative error is
    measured against the larger of 1 and the analytic gradient's magnitude.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    worst = 0.0

    def _fd_vs(analytic: np.ndarray, fd: np.ndarray) -> float:
        scale = max(1.0, float(np.max(np.abs(analytic))))
        return float(np.max(np.abs(fd - analytic))) / scale

    fd_obj = np.zeros(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        fd_obj[i] = (program.objective.value(x + e) - program.objective.value(x - e)) / (2 * h)
    worst = max(worst, _fd_vs(program.objective.gradient(x), fd_obj))

    for block in program.inequalities:
        fd_jac = np.zeros((block.size, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            fd_jac[:, i] = (
                np.asarray(block.values(x + e)) - np.asarray(block.values(x - e))
            ) / (2 * h)
        analytic = np.asarray(block.jacobian(x).todense())
        worst = max(worst, _fd_vs(analytic, fd_jac))
    return worst
