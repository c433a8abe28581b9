"""Max-min PSNR power allocation with the trajectory held fixed.

With distances frozen, each user's PSNR target rewrites into linear form:
psnr_n >= mu becomes phi_n(p) >= 10**(mu/10), where

    phi_n(p) = gamma0 / (sum_k omega_n[k] / p_k + gamma1)

with gamma0 = M * peak^2, gamma1 the truncation tail, and
omega_n[k] = noise_power * lambda_k * d_k(n)**alpha / beta0. phi_n is
concave in p (its negation has PSD Hessian), so maximizing the linear
target tau subject to tau <= phi_n(p), the communication-energy budget
rows and the per-slot box gives a smooth convex program.

The energy budget couples to the fixed trajectory through the flight
energy: N_p * dt * sum(p) <= E_t - E_f, alongside the hard cap
E_c <= E_max. When the budget binds and no per-slot cap does, the
optimizer spreads power proportionally to the square root of
omega (for a single user at constant distance: to sqrt(lambda)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import quality
from .convex import (
    ConstraintBlock,
    InfeasibleError,
    LinearInequalities,
    LinearObjective,
    SmoothConvexProgram,
    SolveReport,
    SolverOptions,
    phase_one,
    solve,
)
from .kinematics import P_FLOOR, PowerAllocation, Trajectory, flight_energy
from .scenario import Scenario

__all__ = [
    "PowerModel",
    "PsnrPowerBlock",
    "PowerStep",
    "power_model",
    "psnr_constraint",
    "solve_power",
    "comm_energy_budget",
]


@dataclass(frozen=True)
class PowerModel:
    """Coefficients of phi_n for every user at a fixed trajectory."""

    omega: np.ndarray  # (N, K)
    gamma0: float
    gamma1: float

    @property
    def n_users(self) -> int:
        return self.omega.shape[0]

    @property
    def slots(self) -> int:
        return self.omega.shape[1]

    def phi(self, p: np.ndarray) -> np.ndarray:
        """phi_n(p) for every user, shape (N,)."""
        return self.gamma0 / (self.omega @ (1.0 / p) + self.gamma1)

    def phi_gradient(self, p: np.ndarray) -> np.ndarray:
        """d phi_n / d p_k, shape (N, K)."""
        t = self.omega @ (1.0 / p) + self.gamma1
        return self.gamma0 * self.omega / (p[None, :] ** 2 * t[:, None] ** 2)

    def phi_hessian(self, p: np.ndarray, user_index: int) -> np.ndarray:
        """Hessian of phi_n in p for one user, shape (K, K). Negative semidefinite."""
        omega_n = self.omega[user_index]
        t = float(omega_n @ (1.0 / p) + self.gamma1)
        u = omega_n / p**2
        scale = 2.0 * self.gamma0 / t**3
        return scale * (np.outer(u, u) - np.diag(omega_n * t / p**3))

    def min_psnr_db(self, p: np.ndarray) -> float:
        return quality.db_from_tau(float(np.min(self.phi(p))))


def power_model(scenario: Scenario, traj: Trajectory) -> PowerModel:
    """Evaluate the phi coefficients of every user on a fixed trajectory."""
    lam = scenario.spectrum.kept_variances()
    rows = []
    for user in scenario.users:
        d_sq = quality.slot_distances_sq(traj, user.position)
        d_alpha = d_sq ** (scenario.channel.alpha / 2.0)
        rows.append(scenario.channel.noise_power * lam * d_alpha / scenario.channel.beta0)
    gamma0 = scenario.spectrum.total_blocks * scenario.pixel_peak**2
    return PowerModel(
        omega=np.array(rows),
        gamma0=gamma0,
        gamma1=scenario.spectrum.truncation_tail(),
    )


class PsnrPowerBlock(ConstraintBlock):
    """Rows tau - phi_n(p) <= 0 over the variable x = (p_1..p_K, tau)."""

    def __init__(self, model: PowerModel):
        self.model = model

    @property
    def size(self):
        return self.model.n_users

    def values(self, x):
        return x[-1] - self.model.phi(x[:-1])

    def jacobian(self, x):
        grad_p = -self.model.phi_gradient(x[:-1])
        tau_col = np.ones((self.size, 1))
        return sp.csr_matrix(np.hstack([grad_p, tau_col]))

    def hessian_combination(self, x, w):
        p = x[:-1]
        k = p.size
        h_p = np.zeros((k, k))
        for n in range(self.size):
            h_p -= w[n] * self.model.phi_hessian(p, n)
        out = np.zeros((k + 1, k + 1))
        out[:k, :k] = h_p
        return sp.csr_matrix(out)


def psnr_constraint(
    scenario: Scenario,
    traj: Trajectory,
    p: np.ndarray,
    mu_db: float,
    user_index: int,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient and Hessian in p of 10**(mu/10) - phi_n(p) for one user."""
    model = power_model(scenario, traj)
    tau = quality.tau_from_db(mu_db)
    value = tau - float(model.phi(p)[user_index])
    grad = -model.phi_gradient(p)[user_index]
    hess = -model.phi_hessian(p, user_index)
    return value, grad, hess


def comm_energy_budget(scenario: Scenario, traj: Trajectory) -> tuple[float, float]:
    """(available communication energy, flight energy) for a fixed trajectory."""
    e_f = flight_energy(scenario.propulsion, traj, scenario.slot_len)
    return scenario.total_energy - e_f, e_f


@dataclass
class PowerStep:
    power: PowerAllocation
    mu_db: float
    report: SolveReport
    kept_start: bool  # True when the start already dominated the solve


def _strictly_feasible_start(
    p_hint: np.ndarray, budget: float, per_coeff: float, cap: float | None
) -> np.ndarray:
    # a comfortable interior margin matters: near-boundary starts blow up the
    # barrier gradient and stall the first centering stage
    hi = cap * (1.0 - 1e-3) if cap is not None else np.inf
    p0 = np.clip(p_hint, 2.0 * P_FLOOR, hi)
    total = per_coeff * np.sum(p0)
    if total >= budget * (1.0 - 1e-3):
        p0 = p0 * (budget * (1.0 - 1e-3) / total)
        p0 = np.clip(p0, 2.0 * P_FLOOR, hi)
    return p0


def solve_power(
    scenario: Scenario,
    traj: Trajectory,
    p_start: PowerAllocation | None = None,
    options: SolverOptions | None = None,
    budget_reserve: float = 1e-3,
) -> PowerStep:
    """Maximize the minimum PSNR over the power allocation, trajectory fixed.

    Raises :class:`InfeasibleError` when the flight alone exhausts the
    energy budget. The returned allocation never scores below the start:
    if the solve cannot improve on a feasible ``p_start`` (e.g. the start
    already sits on the optimal cap face), the start is returned unchanged.

    ``budget_reserve`` withholds a sliver of the total-energy budget (in
    joules) so the trajectory step that follows retains a strictly
    feasible interior even when this step drives the budget tight; its
    PSNR cost is orders of magnitude below the solve tolerance.
    """
    k = scenario.slots
    per_coeff = scenario.coeffs_per_block * scenario.slot_len
    e_budget, e_f = comm_energy_budget(scenario, traj)
    floor_need = k * per_coeff * P_FLOOR
    if e_budget < floor_need:
        raise InfeasibleError(
            f"flight energy {e_f:.1f} J leaves {e_budget:.3g} J for communications; "
            f"minimum required is {floor_need:.3g} J"
        )

    model = power_model(scenario, traj)
    e_max = scenario.comm_energy_cap()
    cap = scenario.max_avg_power if scenario.per_slot_cap else None
    reserve = min(budget_reserve, 0.5 * (e_budget - floor_need))

    if cap is not None and e_budget - reserve >= e_max:
        # every phi_n strictly increases in every p_k, so when the energy
        # budget dominates the cap corner, full caps are exactly optimal
        p_star = np.full(k, cap)
        return PowerStep(
            power=PowerAllocation(p=p_star),
            mu_db=model.min_psnr_db(p_star),
            report=SolveReport(
                x=np.concatenate([p_star, [float(np.min(model.phi(p_star)))]]),
                objective=-float(np.min(model.phi(p_star))),
                status="optimal",
                max_violation=0.0,
                eq_residual=0.0,
                kkt_residual=0.0,
                gap=0.0,
                newton_iters=0,
                barrier_stages=0,
            ),
            kept_start=False,
        )

    # rows: budget (23) with flight energy fixed, then hard cap (15)
    budget_rows = LinearInequalities(
        per_coeff * np.ones((2, k)), np.array([e_budget - reserve, e_max])
    )
    floor_rows = LinearInequalities(-np.eye(k), -P_FLOOR * np.ones(k))
    blocks: list[ConstraintBlock] = [budget_rows, floor_rows]
    if cap is not None:
        blocks.append(LinearInequalities(np.eye(k), cap * np.ones(k)))

    # augment every row with a zero tau column
    for b in blocks:
        b.G = sp.hstack([b.G, sp.csr_matrix((b.G.shape[0], 1))], format="csr")
    psnr_block = PsnrPowerBlock(model)

    hint = p_start.p if p_start is not None else np.full(k, scenario.max_avg_power)
    p0 = _strictly_feasible_start(hint, min(e_budget - reserve, e_max), per_coeff, cap)

    phi0 = model.phi(p0)
    tau0 = float(np.min(phi0))
    x0 = np.concatenate([p0, [tau0 - max(1e-12, 1e-6 * tau0)]])

    program = SmoothConvexProgram(
        n=k + 1,
        objective=LinearObjective(np.concatenate([np.zeros(k), [-1.0]])),
        inequalities=blocks + [psnr_block],
    )
    if not program.strictly_feasible(x0):
        x0 = phase_one(program, x0)

    if options is None:
        options = SolverOptions(gap_tol=1e-7 * max(1.0, tau0), kkt_tol=1e-6)
    report = solve(program, x0, options)

    p_solved = np.maximum(report.x[:k], P_FLOOR)
    mu_solved = model.min_psnr_db(p_solved)

    # never hand back something worse than a feasible start
    if p_start is not None:
        start_ok = (
            np.all(p_start.p >= P_FLOOR)
            and (cap is None or np.all(p_start.p <= cap * (1.0 + 1e-12)))
            and per_coeff * np.sum(p_start.p) <= min(e_budget, e_max) * (1.0 + 1e-12)
        )
        if start_ok:
            mu_start = model.min_psnr_db(p_start.p)
            if mu_start > mu_solved:
                return PowerStep(
                    power=p_start, mu_db=mu_start, report=report, kept_start=True
                )
    return PowerStep(
        power=PowerAllocation(p=p_solved),
        mu_db=mu_solved,
        report=report,
        kept_start=False,
    )
