"""Analytic reconstruction distortion, MSE and PSNR of the broadcast video.

For user n, the expected distortion splits into a channel-noise part,
sum over transmitted blocks of noise_power * lambda_k / (h_k^2 p_k), and a
truncation part, the total variance of the discarded blocks, both scaled
by the number of coefficients per block. MSE divides the unscaled sum by
the total block count, and PSNR is 10 log10(peak^2 / MSE).

PSNR is strictly increasing in every per-slot power and strictly
decreasing in every per-slot distance. Solvers work on the linearized
target tau = 10**(psnr/10) to avoid differentiating through the
logarithm; the helpers at the bottom convert both ways.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kinematics import PowerAllocation, Trajectory
from .scenario import GroundUser, Scenario

__all__ = [
    "DistortionBreakdown",
    "expected_distortion",
    "mse",
    "psnr_from_mse",
    "psnr",
    "min_psnr",
    "slot_distances_sq",
    "tau_from_db",
    "db_from_tau",
]


def slot_distances_sq(traj: Trajectory, position) -> np.ndarray:
    """Squared UAV-to-point distance per slot k = 1..K."""
    diff = traj.q[1:] - np.asarray(position, dtype=float)[None, :]
    return np.sum(diff**2, axis=1)


def _slot_gains_sq(scenario: Scenario, traj: Trajectory, user: GroundUser) -> np.ndarray:
    d_sq = slot_distances_sq(traj, user.position)
    return scenario.channel.beta0 / d_sq ** (scenario.channel.alpha / 2.0)


@dataclass(frozen=True)
class DistortionBreakdown:
    """Expected distortion of one user, split by cause.

    noise_terms     per-slot noise contribution, noise_power*lambda_k/(h_k^2 p_k)
    truncation_term total variance of the discarded blocks
    total           coeffs_per_block * (sum(noise_terms) + truncation_term)
    """

    noise_terms: np.ndarray
    truncation_term: float
    total: float

    @property
    def noise_term(self) -> float:
        return float(np.sum(self.noise_terms))


def expected_distortion(
    scenario: Scenario, traj: Trajectory, power: PowerAllocation, user: GroundUser
) -> DistortionBreakdown:
    """Expected reconstruction distortion of ``user`` in squared pixel units."""
    lam = scenario.spectrum.kept_variances()
    h_sq = _slot_gains_sq(scenario, traj, user)
    noise = scenario.channel.noise_power * lam / (h_sq * power.p)
    trunc = scenario.spectrum.truncation_tail()
    total = scenario.coeffs_per_block * (float(np.sum(noise)) + trunc)
    return DistortionBreakdown(noise_terms=noise, truncation_term=trunc, total=total)


def mse(
    scenario: Scenario, traj: Trajectory, power: PowerAllocation, user: GroundUser
) -> float:
    """Per-pixel mean squared error: distortion over all coefficients."""
    d = expected_distortion(scenario, traj, power, user)
    return d.total / (scenario.coeffs_per_block * scenario.spectrum.total_blocks)


def psnr_from_mse(mse_value: float, pixel_peak: float) -> float:
    """10 log10(peak^2 / MSE); +inf sentinel for an exactly zero MSE."""
    if mse_value < 0.0:
        raise ValueError(f"MSE must be nonnegative, got {mse_value}")
    if mse_value == 0.0:
        return math.inf
    return 10.0 * math.log10(pixel_peak**2 / mse_value)


def psnr(
    scenario: Scenario, traj: Trajectory, power: PowerAllocation, user: GroundUser
) -> float:
    """Reconstruction PSNR of ``user`` in dB."""
    return psnr_from_mse(mse(scenario, traj, power, user), scenario.pixel_peak)


def min_psnr(
    scenario: Scenario, traj: Trajectory, power: PowerAllocation
) -> tuple[float, int]:
    """Worst PSNR across users and the id of the worst user.

    Ties break deterministically toward the lowest user id.
    """
    if not scenario.users:
        raise ValueError("scenario has no users")
    best_val = math.inf
    best_id = None
    for user in sorted(scenario.users, key=lambda u: u.id):
        val = psnr(scenario, traj, power, user)
        if val < best_val:
            best_val = val
            best_id = user.id
    return best_val, best_id


def tau_from_db(mu_db: float) -> float:
    """Linearized PSNR target: 10**(mu/10)."""
    return 10.0 ** (mu_db / 10.0)


def db_from_tau(tau: float) -> float:
    if tau <= 0.0:
        raise ValueError(f"linear PSNR target must be positive, got {tau}")
    return 10.0 * math.log10(tau)
