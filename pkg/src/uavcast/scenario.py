"""Problem-instance data model, validation, and the canonical initialization.

A Scenario bundles everything one optimization run needs: ground users,
flight endpoints and limits, propulsion and channel constants, the
variance spectrum of the source coefficient blocks, and the energy/power
budgets. Instances are immutable after construction; relational
invariants are checked by :func:`validate`, which reports per-field
diagnostics instead of raising, so malformed configurations can be
inspected.

Positions are 3-vectors. The UAV flies at fixed altitude (z pinned to the
scenario altitude, users at z = 0); optimization acts on the horizontal
components only, while distances stay 3-D.

Scenario files are YAML with units spelled out in the key names
(``total_energy_j``, ``max_avg_power_dbm``, ...). Any scalar key can be
overridden through an ``UAVCAST_<KEY>`` environment variable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import yaml

from .channel import ChannelParams, dbm_to_watts, linear_to_db, watts_to_dbm
from .kinematics import PowerAllocation, PropulsionParams, Trajectory
from .rng import USERS, stream

__all__ = [
    "GroundUser",
    "KinematicLimits",
    "BlockSpectrum",
    "Scenario",
    "ScenarioError",
    "ValidationResult",
    "validate",
    "generate_users",
    "initial_solution",
    "load_scenario",
    "save_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
]


class ScenarioError(ValueError):
    """Raised when an operation requires a valid scenario and got an invalid one."""


def _vec3(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GroundUser:
    """A broadcast receiver at a fixed ground coordinate (z = 0)."""

    id: int
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position))


@dataclass(frozen=True)
class KinematicLimits:
    """Speed corridor and acceleration cap of the fixed-wing platform."""

    v_min: float
    v_max: float
    a_max: float


@dataclass(frozen=True)
class BlockSpectrum:
    """Variances of the source coefficient blocks, sorted nonincreasing.

    ``kept`` blocks are transmitted (block k in slot k); the tail is
    discarded and contributes pure truncation distortion.
    """

    variances: np.ndarray
    kept: int

    def __post_init__(self):
        arr = np.array(self.variances, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("spectrum must be a nonempty 1-D sequence")
        arr.setflags(write=False)
        object.__setattr__(self, "variances", arr)

    @property
    def total_blocks(self) -> int:
        return self.variances.size

    def kept_variances(self) -> np.ndarray:
        return self.variances[: self.kept]

    def truncation_tail(self) -> float:
        """Sum of the discarded variances."""
        return float(np.sum(self.variances[self.kept:]))


@dataclass(frozen=True)
class Scenario:
    """One complete problem instance. Immutable; safe to share across workers."""

    users: tuple[GroundUser, ...]
    start: np.ndarray
    end: np.ndarray
    altitude: float
    slots: int
    slot_len: float
    limits: KinematicLimits
    propulsion: PropulsionParams
    channel: ChannelParams
    spectrum: BlockSpectrum
    total_energy: float
    max_avg_power: float
    coeffs_per_block: int
    pixel_peak: float
    v0: np.ndarray | None = None
    a0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    # Enforce p_k <= max_avg_power per slot in addition to the energy cap on
    # the communication total. Relaxable for experiments.
    per_slot_cap: bool = True

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "start", _vec3(self.start))
        object.__setattr__(self, "end", _vec3(self.end))
        v0 = self.cruise_velocity() if self.v0 is None else self.v0
        object.__setattr__(self, "v0", _vec3(v0))
        object.__setattr__(self, "a0", _vec3(self.a0))

    @property
    def n_users(self) -> int:
        return len(self.users)

    def user_positions(self) -> np.ndarray:
        return np.array([u.position for u in self.users])

    def duration(self) -> float:
        return self.slots * self.slot_len

    def cruise_velocity(self) -> np.ndarray:
        """Constant velocity of the straight start-to-end flight."""
        return (self.end - self.start) / self.duration()

    def cruise_speed(self) -> float:
        return float(np.linalg.norm(self.cruise_velocity()))

    def comm_energy_cap(self) -> float:
        """Largest admissible communication energy: K * N_p * dt * P_max."""
        return self.slots * self.coeffs_per_block * self.slot_len * self.max_avg_power


@dataclass(frozen=True)
class ValidationResult:
    errors: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.errors

    def raise_if_invalid(self) -> None:
        if self.errors:
            raise ScenarioError("invalid scenario: " + "; ".join(self.errors))


def validate(scenario: Scenario) -> ValidationResult:
    """Check every structural invariant plus straight-line reachability.

    The straight flight from start to end at constant speed must fit the
    speed corridor, i.e. |end - start| / (K dt) within [v_min, v_max];
    the canonical initialization depends on it.
    """
    errs: list[str] = []
    s = scenario

    if s.slots < 1:
        errs.append(f"slots: must be >= 1, got {s.slots}")
    if s.slot_len <= 0.0:
        errs.append(f"slot_len: must be positive, got {s.slot_len}")
    if s.altitude <= 0.0:
        errs.append(f"altitude: must be positive, got {s.altitude}")
    if abs(s.start[2] - s.altitude) > 1e-9:
        errs.append(f"start: z-component {s.start[2]} must equal altitude {s.altitude}")
    if abs(s.end[2] - s.altitude) > 1e-9:
        errs.append(f"end: z-component {s.end[2]} must equal altitude {s.altitude}")
    if s.total_energy <= 0.0:
        errs.append(f"total_energy: must be positive, got {s.total_energy}")
    if s.max_avg_power <= 0.0:
        errs.append(f"max_avg_power: must be positive, got {s.max_avg_power}")
    if s.coeffs_per_block < 1:
        errs.append(f"coeffs_per_block: must be >= 1, got {s.coeffs_per_block}")
    if s.pixel_peak <= 0.0:
        errs.append(f"pixel_peak: must be positive, got {s.pixel_peak}")

    if not s.users:
        errs.append("users: at least one ground user is required")
    ids = [u.id for u in s.users]
    if len(set(ids)) != len(ids):
        errs.append("users: ids must be unique")
    for u in s.users:
        if u.position[2] != 0.0:
            errs.append(f"users: user {u.id} must sit at z = 0, got z = {u.position[2]}")

    lim = s.limits
    if not 0.0 < lim.v_min < lim.v_max:
        errs.append(f"limits: need 0 < v_min < v_max, got [{lim.v_min}, {lim.v_max}]")
    if lim.a_max <= 0.0:
        errs.append(f"limits: a_max must be positive, got {lim.a_max}")

    spec = s.spectrum
    if np.any(spec.variances < 0.0):
        errs.append("spectrum: variances must be nonnegative")
    if np.any(np.diff(spec.variances) > 0.0):
        errs.append("spectrum: variances must be sorted in nonincreasing order")
    if not 1 <= spec.kept <= spec.total_blocks:
        errs.append(
            f"spectrum: kept must be within [1, {spec.total_blocks}], got {spec.kept}"
        )
    if spec.kept != s.slots:
        errs.append(
            f"spectrum: kept blocks ({spec.kept}) must equal slot count ({s.slots}); "
            "one block is transmitted per slot"
        )

    if abs(s.v0[2]) > 1e-12 or abs(s.a0[2]) > 1e-12:
        errs.append("v0/a0: vertical components must be zero at fixed altitude")
    if s.slots >= 1 and s.slot_len > 0.0:
        cruise = s.cruise_speed()
        if not lim.v_min <= cruise <= lim.v_max:
            errs.append(
                f"speed-infeasibility: straight-line cruise speed {cruise:.4f} m/s "
                f"outside [{lim.v_min}, {lim.v_max}]"
            )
        if np.linalg.norm(s.v0 - s.cruise_velocity()) > 1e-9:
            errs.append(
                "v0: must equal the straight-line cruise velocity; the constant-speed "
                "initialization pins v[0] to it"
            )
        if np.linalg.norm(s.a0) > 1e-9:
            errs.append("a0: must be zero; the constant-speed initialization pins a[0]")

    return ValidationResult(errors=tuple(errs))


def generate_users(
    seed: int,
    n: int,
    x_range: tuple[float, float],
    y_range: tuple[float, float],
) -> list[GroundUser]:
    """Place n users uniformly in the given box, deterministically per seed."""
    if n < 1:
        raise ValueError(f"need at least one user, got n = {n}")
    if not (x_range[1] > x_range[0] and y_range[1] > y_range[0]):
        raise ValueError(f"placement box is empty: x {x_range}, y {y_range}")
    rng = stream(seed, USERS)
    xs = rng.uniform(x_range[0], x_range[1], size=n)
    ys = rng.uniform(y_range[0], y_range[1], size=n)
    return [GroundUser(id=i + 1, position=[xs[i], ys[i], 0.0]) for i in range(n)]


def initial_solution(scenario: Scenario) -> tuple[Trajectory, PowerAllocation]:
    """Straight constant-speed flight with every slot at the power cap.

    Satisfies the motion equations and boundary conditions exactly (zero
    dynamics residual): q[k] interpolates start to end, v[k] is the cruise
    velocity for every k, a[k] is zero.
    """
    validate(scenario).raise_if_invalid()
    k = np.arange(scenario.slots + 1)[:, None]
    q = scenario.start[None, :] + (k / scenario.slots) * (scenario.end - scenario.start)[None, :]
    v = np.tile(scenario.cruise_velocity(), (scenario.slots + 1, 1))
    a = np.zeros((scenario.slots + 1, 3))
    traj = Trajectory(q=q, v=v, a=a)
    power = PowerAllocation(p=np.full(scenario.slots, scenario.max_avg_power))
    return traj, power


# ---------------------------------------------------------------------------
# scenario files


_ENV_PREFIX = "UAVCAST_"


def scenario_to_dict(scenario: Scenario) -> dict:
    s = scenario
    return {
        "slots": int(s.slots),
        "slot_len_s": float(s.slot_len),
        "altitude_m": float(s.altitude),
        "start_m": [float(x) for x in s.start],
        "end_m": [float(x) for x in s.end],
        "users": [[float(u.position[0]), float(u.position[1])] for u in s.users],
        "v_min_mps": float(s.limits.v_min),
        "v_max_mps": float(s.limits.v_max),
        "a_max_mps2": float(s.limits.a_max),
        "v0_mps": [float(x) for x in s.v0],
        "a0_mps2": [float(x) for x in s.a0],
        "c1": float(s.propulsion.c1),
        "c2": float(s.propulsion.c2),
        "g0_mps2": float(s.propulsion.g0),
        "beta0_db": linear_to_db(s.channel.beta0),
        "alpha": float(s.channel.alpha),
        "noise_power_dbm": watts_to_dbm(s.channel.noise_power),
        "max_avg_power_dbm": watts_to_dbm(s.max_avg_power),
        "per_slot_cap": bool(s.per_slot_cap),
        "total_energy_j": float(s.total_energy),
        "coeffs_per_block": int(s.coeffs_per_block),
        "pixel_peak": float(s.pixel_peak),
        "spectrum_variances": [float(x) for x in s.spectrum.variances],
    }


def scenario_from_dict(data: dict) -> Scenario:
    try:
        users = [
            GroundUser(id=i + 1, position=[xy[0], xy[1], 0.0])
            for i, xy in enumerate(data["users"])
        ]
        spectrum = BlockSpectrum(
            variances=data["spectrum_variances"], kept=int(data["slots"])
        )
        return Scenario(
            users=users,
            start=data["start_m"],
            end=data["end_m"],
            altitude=float(data["altitude_m"]),
            slots=int(data["slots"]),
            slot_len=float(data["slot_len_s"]),
            limits=KinematicLimits(
                v_min=float(data["v_min_mps"]),
                v_max=float(data["v_max_mps"]),
                a_max=float(data["a_max_mps2"]),
            ),
            propulsion=PropulsionParams(
                c1=float(data["c1"]),
                c2=float(data["c2"]),
                g0=float(data.get("g0_mps2", 9.8)),
            ),
            channel=ChannelParams.from_db(
                beta0_db=float(data["beta0_db"]),
                alpha=float(data.get("alpha", 2.0)),
                noise_power_dbm=float(data["noise_power_dbm"]),
            ),
            spectrum=spectrum,
            total_energy=float(data["total_energy_j"]),
            max_avg_power=dbm_to_watts(float(data["max_avg_power_dbm"])),
            coeffs_per_block=int(data["coeffs_per_block"]),
            pixel_peak=float(data["pixel_peak"]),
            v0=data.get("v0_mps"),
            a0=data.get("a0_mps2", [0.0, 0.0, 0.0]),
            per_slot_cap=bool(data.get("per_slot_cap", True)),
        )
    except KeyError as exc:
        raise ScenarioError(f"scenario file is missing key {exc.args[0]!r}") from None


def apply_env_overrides(data: dict, env=None) -> dict:
    """Override scalar keys from UAVCAST_<KEY> environment variables."""
    env = os.environ if env is None else env
    out = dict(data)
    for key in data:
        raw = env.get(_ENV_PREFIX + key.upper())
        if raw is not None:
            out[key] = yaml.safe_load(raw)
    return out


def load_scenario(path, env_overrides: bool = True) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: expected a mapping at the top level")
    if env_overrides:
        data = apply_env_overrides(data)
    return scenario_from_dict(data)


def save_scenario(scenario: Scenario, path) -> None:
    text = yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def with_users(scenario: Scenario, users: Sequence[GroundUser]) -> Scenario:
    return replace(scenario, users=tuple(users))
