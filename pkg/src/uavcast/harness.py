"""Experiment orchestration: default scenarios, runs, sweeps, CSV artifacts.

Every successful run re-validates the full constraint set through the
kinematics and quality modules before anything is written; solver reports
are never trusted for that. Output files are written atomically (temp
file plus rename) and all floats are formatted with a fixed precision, so
identical configurations and seeds produce byte-identical artifacts.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import quality
from .bcd import BcdResult, BcdSettings, optimize
from .channel import ChannelParams
from .convex import InfeasibleError
from .kinematics import (
    P_FLOOR,
    EnergyReport,
    PowerAllocation,
    PropulsionParams,
    Trajectory,
    dynamics_residual,
    energy_feasible,
)
from .pavt import Whitener, blockize_and_sort, dct3_forward, end_to_end, synthetic_gop
from .scenario import (
    BlockSpectrum,
    GroundUser,
    KinematicLimits,
    Scenario,
    generate_users,
    initial_solution,
)

__all__ = [
    "default_scenario",
    "scenario_variant",
    "CertificationReport",
    "certify",
    "baseline",
    "BaselineResult",
    "RunArtifacts",
    "run_optimize",
    "run_simulate",
    "SweepRow",
    "sweep",
    "write_sweep_csv",
    "read_solution",
]

USER_BOX = ((0.0, 1200.0), (0.0, 1200.0))
BLOCK_SHAPE = (18, 22)
FLOAT_FMT = "%.10g"


def default_spectrum(seed: int, kept: int) -> BlockSpectrum:
    """Variance spectrum of the seeded synthetic GOP (192 blocks)."""
    gop = synthetic_gop(seed)
    blocks = blockize_and_sort(dct3_forward(gop.frames), BLOCK_SHAPE)
    return BlockSpectrum(variances=[b.variance for b in blocks], kept=kept)


def default_scenario(
    seed: int = 7,
    n_users: int = 4,
    slots: int = 180,
    total_energy_j: float = 3000.0,
    users: list[GroundUser] | None = None,
) -> Scenario:
    """Standard problem instance: 100 m altitude, 18-second-class flight.

    Users are placed uniformly in a 1200 m box per the seed unless given
    explicitly; the source spectrum comes from the seeded synthetic GOP.
    """
    if users is None:
        users = generate_users(seed, n_users, *USER_BOX)
    return Scenario(
        users=users,
        start=[0.0, 300.0, 100.0],
        end=[300.0, 0.0, 100.0],
        altitude=100.0,
        slots=slots,
        slot_len=0.1,
        limits=KinematicLimits(v_min=3.0, v_max=100.0, a_max=10.0),
        propulsion=PropulsionParams(c1=9.26e-4, c2=2250.0, g0=9.8),
        channel=ChannelParams.from_db(beta0_db=-40.0, alpha=2.0, noise_power_dbm=-109.0),
        spectrum=default_spectrum(seed, kept=slots),
        total_energy=total_energy_j,
        max_avg_power=10 ** ((10.0 - 30.0) / 10.0),  # 10 dBm
        coeffs_per_block=396,
        pixel_peak=255.0,
    )


def scenario_variant(
    base: Scenario,
    slots: int | None = None,
    total_energy: float | None = None,
    users: list[GroundUser] | None = None,
) -> Scenario:
    """Rebuild a scenario with one swept parameter changed.

    The straight-line cruise velocity depends on the slot count, so the
    initial velocity is re-derived rather than copied.
    """
    new_slots = base.slots if slots is None else slots
    return Scenario(
        users=base.users if users is None else users,
        start=base.start,
        end=base.end,
        altitude=base.altitude,
        slots=new_slots,
        slot_len=base.slot_len,
        limits=base.limits,
        propulsion=base.propulsion,
        channel=base.channel,
        spectrum=BlockSpectrum(variances=base.spectrum.variances, kept=new_slots),
        total_energy=base.total_energy if total_energy is None else total_energy,
        max_avg_power=base.max_avg_power,
        coeffs_per_block=base.coeffs_per_block,
        pixel_peak=base.pixel_peak,
        v0=None,
        a0=[0.0, 0.0, 0.0],
        per_slot_cap=base.per_slot_cap,
    )


# ---------------------------------------------------------------------------
# independent constraint certification


@dataclass(frozen=True)
class CertificationReport:
    """Re-evaluation of the full constraint set on a finished solution."""

    energy: EnergyReport
    dynamics_velocity: float
    dynamics_position: float
    speed_min: float
    speed_max: float
    accel_max: float
    start_error: float
    end_error: float
    v0_error: float
    a0_error: float
    failures: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.failures


def certify(
    scenario: Scenario,
    traj: Trajectory,
    power: PowerAllocation,
    energy_tol: float = 1e-6,
    dynamics_tol: float = 1e-6,
    speed_tol: float = 1e-6,
    endpoint_tol: float = 1e-6,
) -> CertificationReport:
    """Audit energy, motion, speed/acceleration bounds and boundary pins."""
    energy = energy_feasible(scenario, traj, power)
    dyn = dynamics_residual(traj, scenario.slot_len)
    speeds = traj.speeds()
    accels = np.linalg.norm(traj.a[1:], axis=1)
    lim = scenario.limits

    failures = []
    if energy.slack < -energy_tol:
        failures.append(f"energy budget exceeded by {-energy.slack:.3e} J")
    if not energy.comm_within_cap:
        failures.append(f"communication energy {energy.e_c:.6f} J outside [0, {energy.e_max:.6f}]")
    if max(dyn.velocity, dyn.position) > dynamics_tol:
        failures.append(f"dynamics residual {max(dyn.velocity, dyn.position):.3e}")
    if speeds.min() < lim.v_min - speed_tol or speeds.max() > lim.v_max + speed_tol:
        failures.append(f"speed range [{speeds.min():.6f}, {speeds.max():.6f}] outside limits")
    if accels.max() > lim.a_max + speed_tol:
        failures.append(f"acceleration {accels.max():.6f} exceeds {lim.a_max}")
    start_err = float(np.linalg.norm(traj.q[0] - scenario.start))
    end_err = float(np.linalg.norm(traj.q[-1] - scenario.end))
    v0_err = float(np.linalg.norm(traj.v[0] - scenario.v0))
    a0_err = float(np.linalg.norm(traj.a[0] - scenario.a0))
    if max(start_err, end_err) > endpoint_tol:
        failures.append(f"endpoint error {max(start_err, end_err):.3e} m")
    if max(v0_err, a0_err) > endpoint_tol:
        failures.append(f"initial-state error {max(v0_err, a0_err):.3e}")
    if np.any(power.p < P_FLOOR):
        failures.append("per-slot power below the floor")
    if scenario.per_slot_cap and np.any(power.p > scenario.max_avg_power * (1 + 1e-9)):
        failures.append("per-slot power above the cap")

    return CertificationReport(
        energy=energy,
        dynamics_velocity=dyn.velocity,
        dynamics_position=dyn.position,
        speed_min=float(speeds.min()),
        speed_max=float(speeds.max()),
        accel_max=float(accels.max()),
        start_error=start_err,
        end_error=end_err,
        v0_error=v0_err,
        a0_error=a0_err,
        failures=tuple(failures),
    )


# ---------------------------------------------------------------------------
# baseline


@dataclass(frozen=True)
class BaselineResult:
    mu_db: float
    argmin_user: int
    trajectory: Trajectory
    power: PowerAllocation


def baseline(scenario: Scenario) -> BaselineResult:
    """Straight-line flight with equal powers exhausting the available budget."""
    traj, _ = initial_solution(scenario)
    per_coeff = scenario.coeffs_per_block * scenario.slot_len
    budget = scenario.total_energy - energy_feasible(
        scenario, traj, PowerAllocation(p=np.full(scenario.slots, P_FLOOR))
    ).e_f
    if budget < scenario.slots * per_coeff * P_FLOOR:
        raise InfeasibleError("straight-line flight leaves no communication energy")
    p_eq = min(scenario.max_avg_power, budget / (scenario.slots * per_coeff))
    power = PowerAllocation(p=np.full(scenario.slots, p_eq))
    mu, argmin = quality.min_psnr(scenario, traj, power)
    return BaselineResult(mu_db=mu, argmin_user=argmin, trajectory=traj, power=power)


# ---------------------------------------------------------------------------
# atomic CSV / text output


def _atomic_write(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    if isinstance(x, float):
        return FLOAT_FMT % x
    return str(x)


def _csv(path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    _atomic_write(path, "\n".join(lines) + "\n")


def write_trajectory_csv(path, traj: Trajectory, power: PowerAllocation) -> None:
    header = ["k", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az", "p_w"]
    rows = []
    for k in range(traj.q.shape[0]):
        p_w = "" if k == 0 else _fmt(float(power.p[k - 1]))
        rows.append(
            [k]
            + [float(v) for v in traj.q[k]]
            + [float(v) for v in traj.v[k]]
            + [float(v) for v in traj.a[k]]
            + [p_w]
        )
    _csv(path, header, rows)


def write_power_csv(path, scenario: Scenario, power: PowerAllocation) -> None:
    lam = scenario.spectrum.kept_variances()
    rows = [[k + 1, float(lam[k]), float(power.p[k])] for k in range(scenario.slots)]
    _csv(path, ["slot", "lambda", "p_w"], rows)


def write_iterations_csv(path, scenario: Scenario, result: BcdResult) -> None:
    traj0, power0 = initial_solution(scenario)
    rep0 = energy_feasible(scenario, traj0, power0)
    rows = [[0, result.mu_trace[0], rep0.e_c, rep0.e_f]]
    for it in result.iterations:
        rows.append([it.index, it.mu_after_trajectory_db, it.e_c, it.e_f])
    _csv(path, ["iter", "mu_db", "e_c_j", "e_f_j"], rows)


def write_psnr_csv(path, scenario: Scenario, traj: Trajectory, power: PowerAllocation) -> None:
    rows = [
        [u.id, quality.psnr(scenario, traj, power, u)]
        for u in sorted(scenario.users, key=lambda u: u.id)
    ]
    _csv(path, ["user", "analytic_psnr_db"], rows)


def _summary_text(scenario: Scenario, result: BcdResult, cert: CertificationReport) -> str:
    lines = [
        f"status: {result.status}",
        f"outer iterations: {result.outer_iters}",
        f"min PSNR: {result.mu_db:.4f} dB",
        f"communication energy: {cert.energy.e_c:.4f} J",
        f"flight energy: {cert.energy.e_f:.4f} J",
        f"energy slack: {cert.energy.slack:.4f} J",
        "",
        "user   PSNR (dB)",
    ]
    mu_min, argmin = quality.min_psnr(scenario, result.trajectory, result.power)
    for u in sorted(scenario.users, key=lambda x: x.id):
        val = quality.psnr(scenario, result.trajectory, result.power, u)
        mark = "  <- minimum" if u.id == argmin else ""
        lines.append(f"u{u.id:<4} {val:10.4f}{mark}")
    lines.append("")
    lines.append("constraint certification: " + ("PASS" if cert.ok else "FAIL"))
    for f in cert.failures:
        lines.append(f"  - {f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# runs


@dataclass
class RunArtifacts:
    result: BcdResult
    certification: CertificationReport | None
    exit_code: int
    out_dir: str | None = None


def run_optimize(
    scenario: Scenario,
    settings: BcdSettings | None = None,
    out_dir: str | None = None,
) -> RunArtifacts:
    """Optimize, certify, and (optionally) write the full artifact set.

    Exit code 0 on certified success, 2 when infeasible, 3 when the outer
    loop hit its iteration cap without meeting the threshold.
    """
    result = optimize(scenario, settings)
    if result.status == "infeasible":
        return RunArtifacts(result=result, certification=None, exit_code=2, out_dir=out_dir)

    cert = certify(scenario, result.trajectory, result.power)
    code = 0 if result.status == "converged" and cert.ok else 3
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_trajectory_csv(os.path.join(out_dir, "trajectory.csv"), result.trajectory, result.power)
        write_power_csv(os.path.join(out_dir, "power.csv"), scenario, result.power)
        write_iterations_csv(os.path.join(out_dir, "iterations.csv"), scenario, result)
        write_psnr_csv(os.path.join(out_dir, "psnr.csv"), scenario, result.trajectory, result.power)
        _atomic_write(os.path.join(out_dir, "summary.txt"), _summary_text(scenario, result, cert))
    return RunArtifacts(result=result, certification=cert, exit_code=code, out_dir=out_dir)


def run_simulate(
    scenario: Scenario,
    traj: Trajectory,
    power: PowerAllocation,
    seed: int,
    modes: tuple[str, ...] = ("zero_forcing", "llse"),
    trials: int = 2,
    out_dir: str | None = None,
) -> list[list]:
    """Monte-Carlo link validation for every user and decode mode.

    Returns the CSV rows (user, mode, empirical PSNR, analytic PSNR,
    trials); the scenario spectrum is expected to describe the seeded
    synthetic GOP, which gen-scenario guarantees for matching seeds.
    """
    gop = synthetic_gop(seed)
    whitener = Whitener(scenario.coeffs_per_block, seed)
    rows = []
    for u in sorted(scenario.users, key=lambda x: x.id):
        for mode in modes:
            res = end_to_end(
                gop, scenario, traj, power, u, seed=seed, mode=mode,
                block_shape=BLOCK_SHAPE, trials=trials, whitener=whitener,
            )
            rows.append([u.id, mode, res.empirical_psnr_db, res.analytic_psnr_db, trials])
    if out_dir is not None:
        _csv(
            os.path.join(out_dir, "empirical_psnr.csv"),
            ["user", "mode", "empirical_psnr_db", "analytic_psnr_db", "trials"],
            rows,
        )
    return rows


# ---------------------------------------------------------------------------
# parameter sweeps


@dataclass
class SweepRow:
    param: str
    value: float
    status: str
    mu_db: float = math.nan
    argmin_user: int = -1
    outer_iters: int = 0
    e_c: float = math.nan
    e_f: float = math.nan
    user_psnrs_db: dict[int, float] = field(default_factory=dict)
    message: str = ""


def _member_scenario(base: Scenario, param: str, value: float, seed: int) -> Scenario:
    if param == "K":
        return scenario_variant(base, slots=int(value))
    if param == "E_t":
        return scenario_variant(base, total_energy=float(value))
    if param == "N":
        users = generate_users(seed, int(value), *USER_BOX)
        return scenario_variant(base, users=users)
    raise ValueError(f"unknown sweep parameter {param!r} (expected K, E_t or N)")


def sweep(
    base: Scenario,
    param: str,
    values: list[float],
    seed: int,
    settings: BcdSettings | None = None,
    out_dir: str | None = None,
) -> list[SweepRow]:
    """Run the optimizer across one swept parameter; members fail independently.

    For the user-count sweep the placements nest: the first n points of the
    seeded placement, so growing N only adds users.
    """
    rows = []
    for value in values:
        member_dir = None
        if out_dir is not None:
            member_dir = os.path.join(out_dir, f"{param}_{_fmt(float(value))}")
        try:
            scn = _member_scenario(base, param, value, seed)
            run = run_optimize(scn, settings=settings, out_dir=member_dir)
            if run.exit_code == 2:
                rows.append(SweepRow(param=param, value=value, status="infeasible",
                                     message=run.result.message))
                continue
            res = run.result
            mu, argmin = quality.min_psnr(scn, res.trajectory, res.power)
            per_user = {
                u.id: quality.psnr(scn, res.trajectory, res.power, u) for u in scn.users
            }
            rep = energy_feasible(scn, res.trajectory, res.power)
            status = res.status if (run.certification and run.certification.ok) else "uncertified"
            rows.append(
                SweepRow(
                    param=param, value=value, status=status, mu_db=mu,
                    argmin_user=argmin, outer_iters=res.outer_iters,
                    e_c=rep.e_c, e_f=rep.e_f, user_psnrs_db=per_user,
                )
            )
        except Exception as exc:  # noqa: BLE001 - member isolation is the contract
            rows.append(SweepRow(param=param, value=value, status="error", message=str(exc)))
    if out_dir is not None:
        write_sweep_csv(os.path.join(out_dir, "sweep_summary.csv"), rows)
    return rows


def write_sweep_csv(path, rows: list[SweepRow]) -> None:
    header = ["param", "value", "status", "min_psnr_db", "argmin_user",
              "outer_iters", "e_c_j", "e_f_j", "user_psnrs_db"]
    out = []
    for r in rows:
        packed = ";".join(f"{uid}:{FLOAT_FMT % v}" for uid, v in sorted(r.user_psnrs_db.items()))
        out.append([r.param, float(r.value), r.status, r.mu_db, r.argmin_user,
                    r.outer_iters, r.e_c, r.e_f, packed])
    _csv(path, header, out)


# ---------------------------------------------------------------------------
# reading solutions back


def read_solution(out_dir: str) -> tuple[Trajectory, PowerAllocation]:
    """Load trajectory.csv back into (Trajectory, PowerAllocation)."""
    path = os.path.join(out_dir, "trajectory.csv")
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    rows = [ln.split(",") for ln in lines[1:]]
    n = len(rows)
    q = np.zeros((n, 3))
    v = np.zeros((n, 3))
    a = np.zeros((n, 3))
    p = []
    for row in rows:
        k = int(row[0])
        q[k] = [float(x) for x in row[1:4]]
        v[k] = [float(x) for x in row[4:7]]
        a[k] = [float(x) for x in row[7:10]]
        if k > 0:
            p.append(float(row[10]))
    return Trajectory(q=q, v=v, a=a), PowerAllocation(p=np.array(p))
