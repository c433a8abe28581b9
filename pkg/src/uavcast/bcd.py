"""Alternating power/trajectory optimization to a monotone fixed point.

Each outer iteration solves the power subproblem at the current
trajectory, then the trajectory subproblem at the new powers, re-expanded
at the previous trajectory. Both subproblem wrappers refuse to return
anything scoring below their input, and this driver re-evaluates every
candidate through the analytic quality model rather than trusting solver
objectives, so the minimum-PSNR trace is nondecreasing by construction;
a genuine solver regression is logged and the offending block keeps its
previous value.

Convergence follows the relative-improvement rule evaluated in the linear
10**(psnr/10) scale, the solver's native variable; at the default
threshold 1e-4 the distinction from the dB-scale ratio is negligible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import quality
from .convex import InfeasibleError, SolverOptions
from .kinematics import P_FLOOR, PowerAllocation, Trajectory, energy_feasible
from .power import solve_power
from .scenario import Scenario, initial_solution, validate
from .trajectory import SlackSpeeds, solve_trajectory

__all__ = ["BcdSettings", "OuterIteration", "BcdResult", "convergence_check", "optimize"]

logger = logging.getLogger(__name__)


@dataclass
class BcdSettings:
    threshold: float = 1e-4  # relative tau improvement at which to stop
    max_outer: int = 100
    inner_sca_iters: int = 1
    # per-slot step cap for the trajectory subproblem; the surrogate is a
    # global under-estimator, so unconstrained steps stay sound and measure
    # faster -- set a radius to damp the early iterations instead
    trust_region_m: float | None = None
    # drop the trust region once per-slot movement falls below this, meters
    trust_region_off_step: float = 1.0
    power_options: SolverOptions | None = None
    trajectory_options: SolverOptions | None = None


@dataclass
class OuterIteration:
    index: int
    mu_before_db: float
    mu_after_power_db: float
    mu_after_trajectory_db: float
    e_c: float
    e_f: float
    power_kept: bool
    trajectory_kept: bool
    step_size_m: float
    newton_iters: int


@dataclass
class BcdResult:
    status: str  # 'converged' | 'max_outer' | 'infeasible'
    power: PowerAllocation
    trajectory: Trajectory
    slack: SlackSpeeds
    mu_trace: list[float]
    iterations: list[OuterIteration] = field(default_factory=list)
    message: str = ""

    @property
    def mu_db(self) -> float:
        return self.mu_trace[-1]

    @property
    def outer_iters(self) -> int:
        return len(self.iterations)


def convergence_check(mu_prev_db: float, mu_next_db: float, threshold: float) -> bool:
    """True when the relative improvement in the linear scale is <= threshold.

    A decrease trips the same rule (nothing further to gain) but is logged
    as a monotonicity violation, which the driver's safeguards should have
    prevented.
    """
    tau_prev = quality.tau_from_db(mu_prev_db)
    tau_next = quality.tau_from_db(mu_next_db)
    improvement = (tau_next - tau_prev) / tau_prev
    if improvement < 0.0:
        logger.warning(
            "monotonicity violation: objective fell from %.9f dB to %.9f dB",
            mu_prev_db,
            mu_next_db,
        )
    return improvement <= threshold


def _repair_initial_power(
    scenario: Scenario, traj: Trajectory, power: PowerAllocation
) -> PowerAllocation | None:
    """Scale powers down to fit the energy budget; None when impossible."""
    report = energy_feasible(scenario, traj, power)
    if report.feasible:
        return power
    per_coeff = scenario.coeffs_per_block * scenario.slot_len
    budget = scenario.total_energy - report.e_f
    p_eq = min(scenario.max_avg_power, budget * (1.0 - 1e-9) / (scenario.slots * per_coeff))
    if p_eq < P_FLOOR:
        return None
    return PowerAllocation(p=np.full(scenario.slots, p_eq))


def optimize(scenario: Scenario, settings: BcdSettings | None = None) -> BcdResult:
    """Run the alternating optimization from the straight-line initialization."""
    settings = settings or BcdSettings()
    validate(scenario).raise_if_invalid()

    traj, power = initial_solution(scenario)
    slack = SlackSpeeds(o=traj.speeds())
    repaired = _repair_initial_power(scenario, traj, power)
    if repaired is None:
        return BcdResult(
            status="infeasible",
            power=power,
            trajectory=traj,
            slack=slack,
            mu_trace=[-np.inf],
            message="flight energy of the straight line exceeds the total budget",
        )
    power = repaired

    mu, _ = quality.min_psnr(scenario, traj, power)
    trace = [mu]
    iterations: list[OuterIteration] = []
    trust = settings.trust_region_m
    status = "max_outer"
    message = ""

    for r in range(1, settings.max_outer + 1):
        newton = 0
        try:
            pstep = solve_power(scenario, traj, power, options=settings.power_options)
        except InfeasibleError as exc:
            status = "infeasible"
            message = str(exc)
            break
        newton += pstep.report.newton_iters
        mu_power, _ = quality.min_psnr(scenario, traj, pstep.power)
        power_kept = pstep.kept_start
        if mu_power < mu:
            logger.warning(
                "power step regressed (%.9f -> %.9f dB); keeping previous allocation",
                mu,
                mu_power,
            )
            mu_power = mu
            power_kept = True
        else:
            power = pstep.power

        try:
            tstep = solve_trajectory(
                scenario,
                power,
                traj,
                trust_radius=trust,
                inner_iters=settings.inner_sca_iters,
                options=settings.trajectory_options,
            )
        except InfeasibleError as exc:
            status = "infeasible"
            message = str(exc)
            break
        newton += tstep.report.newton_iters
        mu_traj = tstep.mu_db
        traj_kept = tstep.kept_start
        if mu_traj < mu_power:
            logger.warning(
                "trajectory step regressed (%.9f -> %.9f dB); keeping previous path",
                mu_power,
                mu_traj,
            )
            mu_traj = mu_power
            traj_kept = True
        else:
            step_size = float(
                np.max(np.linalg.norm(tstep.trajectory.q - traj.q, axis=1))
            )
            traj = tstep.trajectory
            slack = tstep.slack
        if traj_kept:
            step_size = 0.0
            slack = SlackSpeeds(o=traj.speeds())

        report = energy_feasible(scenario, traj, power)
        iterations.append(
            OuterIteration(
                index=r,
                mu_before_db=mu,
                mu_after_power_db=mu_power,
                mu_after_trajectory_db=mu_traj,
                e_c=report.e_c,
                e_f=report.e_f,
                power_kept=power_kept,
                trajectory_kept=traj_kept,
                step_size_m=step_size,
                newton_iters=newton,
            )
        )
        trace.append(mu_traj)
        converged = convergence_check(mu, mu_traj, settings.threshold)
        mu = mu_traj
        if trust is not None and step_size < settings.trust_region_off_step:
            trust = None
        if converged:
            status = "converged"
            break

    return BcdResult(
        status=status,
        power=power,
        trajectory=traj,
        slack=slack,
        mu_trace=trace,
        iterations=iterations,
        message=message,
    )
