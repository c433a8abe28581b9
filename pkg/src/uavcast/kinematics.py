"""Fixed-wing UAV motion consistency, propulsion power and energy accounting.

Trajectories are discretized over K slots of length dt. Index 0 of every
sequence stores the boundary conditions (start position, initial velocity
and acceleration) and is never a decision variable; slots 1..K carry the
flight. Velocity and position evolve under piecewise-constant slot
acceleration:

    v[k] = v[k-1] + a[k-1] dt
    q[k] = q[k-1] + v[k-1] dt + a[k-1] dt^2 / 2

Propulsion power of the fixed-wing model is c1 |v|^3 + (c2/|v|)(1 + |a|^2/g0^2),
singular at zero speed, strictly convex in (|v|, a) above it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .scenario import Scenario

# Lower bound applied to every per-slot transmission power. Keeps the 1/p_k
# terms of the distortion model finite; the physical model only requires
# positive communication energy.
P_FLOOR = 1e-9


def _frozen_array(x, shape) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PropulsionParams:
    """Constants of the fixed-wing propulsion model (c1, c2) and gravity g0."""

    c1: float
    c2: float
    g0: float = 9.8

    def __post_init__(self):
        for name in ("c1", "c2", "g0"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Trajectory:
    """Per-slot position/velocity/acceleration sequences, shape (K+1, 3).

    Row 0 holds the boundary conditions; rows 1..K are the flight.
    Arrays are made read-only so instances can be shared across workers.
    """

    q: np.ndarray
    v: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        n = np.shape(self.q)[0]
        object.__setattr__(self, "q", _frozen_array(self.q, (n, 3)))
        object.__setattr__(self, "v", _frozen_array(self.v, (n, 3)))
        object.__setattr__(self, "a", _frozen_array(self.a, (n, 3)))
        if n < 2:
            raise ValueError("trajectory needs at least one slot")

    @property
    def slots(self) -> int:
        return self.q.shape[0] - 1

    def speeds(self) -> np.ndarray:
        """|v[k]| for k = 1..K."""
        return np.linalg.norm(self.v[1:], axis=1)


@dataclass(frozen=True)
class PowerAllocation:
    """Average transmission power per slot, watts, shape (K,)."""

    p: np.ndarray

    def __post_init__(self):
        arr = np.array(self.p, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("power allocation must be a nonempty 1-D sequence")
        if np.any(arr < P_FLOOR):
            raise ValueError(f"per-slot powers must be >= {P_FLOOR} W")
        arr.setflags(write=False)
        object.__setattr__(self, "p", arr)

    @property
    def slots(self) -> int:
        return self.p.size


class DynamicsResidual(NamedTuple):
    velocity: float  # max |v[k] - v[k-1] - a[k-1] dt|, m/s
    position: float  # max |q[k] - q[k-1] - v[k-1] dt - a[k-1] dt^2 / 2|, m


def dynamics_residual(traj: Trajectory, dt: float) -> DynamicsResidual:
    """Worst-case violation of the discrete motion equations over all slots."""
    q, v, a = traj.q, traj.v, traj.a
    if not (q.shape == v.shape == a.shape):
        raise ValueError("q, v, a must have matching shapes")
    dv = v[1:] - v[:-1] - a[:-1] * dt
    dq = q[1:] - q[:-1] - v[:-1] * dt - 0.5 * a[:-1] * dt**2
    return DynamicsResidual(
        velocity=float(np.max(np.linalg.norm(dv, axis=1))),
        position=float(np.max(np.linalg.norm(dq, axis=1))),
    )


def propulsion_power(params: PropulsionParams, v, a) -> float:
    """Instantaneous propulsion power, watts, for velocity v and acceleration a."""
    speed = float(np.linalg.norm(v))
    if speed <= 0.0:
        raise ValueError("fixed-wing propulsion power is singular at zero speed")
    acc2 = float(np.dot(a, a))
    return params.c1 * speed**3 + (params.c2 / speed) * (1.0 + acc2 / params.g0**2)


def propulsion_profile(params: PropulsionParams, traj: Trajectory) -> np.ndarray:
    """Propulsion power per slot k = 1..K, watts."""
    speeds = traj.speeds()
    if np.any(speeds <= 0.0):
        raise ValueError("fixed-wing propulsion power is singular at zero speed")
    acc2 = np.sum(traj.a[1:] ** 2, axis=1)
    return params.c1 * speeds**3 + (params.c2 / speeds) * (1.0 + acc2 / params.g0**2)


def flight_energy(params: PropulsionParams, traj: Trajectory, dt: float) -> float:
    """Total propulsion energy over the flight, joules."""
    return float(dt * np.sum(propulsion_profile(params, traj)))


def comm_energy(coeffs_per_block: int, dt: float, power: PowerAllocation) -> float:
    """Communication energy: coefficients per block times dt times sum of powers."""
    return float(coeffs_per_block * dt * np.sum(power.p))


def min_propulsion_speed(params: PropulsionParams) -> float:
    """Speed minimizing level-flight propulsion power, (c2 / 3 c1)**0.25."""
    return (params.c2 / (3.0 * params.c1)) ** 0.25


@dataclass(frozen=True)
class EnergyReport:
    """Energy budget audit for one (trajectory, power) pair."""

    e_c: float
    e_f: float
    e_max: float
    slack: float
    comm_within_cap: bool
    feasible: bool


def energy_feasible(scenario: "Scenario", traj: Trajectory, power: PowerAllocation) -> EnergyReport:
    """Audit the total-energy and communication-energy constraints.

    Reports rather than raises: slack = E_t - E_c - E_f, and the solution is
    feasible iff slack >= 0 and the communication energy stays within
    [0, E_max] where E_max = K * N_p * dt * P_max.
    """
    e_c = comm_energy(scenario.coeffs_per_block, scenario.slot_len, power)
    e_f = flight_energy(scenario.propulsion, traj, scenario.slot_len)
    e_max = scenario.comm_energy_cap()
    slack = scenario.total_energy - e_c - e_f
    within = 0.0 <= e_c <= e_max
    return EnergyReport(
        e_c=e_c,
        e_f=e_f,
        e_max=e_max,
        slack=slack,
        comm_within_cap=within,
        feasible=bool(slack >= 0.0 and within),
    )
