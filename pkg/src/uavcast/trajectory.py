"""UAV trajectory optimization with the power allocation held fixed.

The PSNR targets and the minimum-speed bound are non-convex in the
trajectory, so each solve works on first-order surrogates expanded at the
incoming trajectory:

* squared speed is bounded below by its tangent,
  |v|^2 >= |v_r|^2 + 2 v_r.(v - v_r), used for the speed floor and for the
  slack-speed cone;
* each user's PSNR is bounded below by
  I_n - sum_k J_n[k] (|q[k]-w_n|^2 - |q_r[k]-w_n|^2), a concave quadratic
  in the positions, exact at the expansion point and a global
  under-estimator elsewhere.

A slack speed o[k] stands in for |v[k]| inside the reciprocal propulsion
term, so the energy budget row is jointly convex in (v, a, o); at a tight
budget the slack presses against its cone and matches the speed. The
resulting program maximizes the worst surrogate PSNR over the stacked
per-slot variables (qx, qy, vx, vy, ax, ay, o) plus the shared target mu,
with the motion equations and endpoints as linear equalities.

An optional per-slot trust region guards the expansion's validity during
early outer iterations; it leaves fixed points unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import quality
from .convex import (
    ConstraintBlock,
    LinearInequalities,
    LinearObjective,
    SmoothConvexProgram,
    SolveReport,
    SolverOptions,
    phase_one,
    solve,
)
from .kinematics import PowerAllocation, Trajectory, comm_energy
from .scenario import Scenario

__all__ = [
    "SurrogateCoefficients",
    "SlackSpeeds",
    "TrajectoryStep",
    "build_surrogate",
    "surrogate_psnr",
    "velocity_lower_bound",
    "solve_trajectory",
    "slack_tightness",
]

_LN10 = math.log(10.0)


@dataclass(frozen=True)
class SurrogateCoefficients:
    """Expansion data of the per-user PSNR lower bounds at one trajectory.

    intercepts_db equals each user's exact PSNR at the expansion point;
    slopes_db_per_m2 are nonnegative sensitivities to squared distance.
    """

    intercepts_db: np.ndarray  # (N,)
    slopes_db_per_m2: np.ndarray  # (N, K)
    users_xy: np.ndarray  # (N, 2)
    expansion_q_xy: np.ndarray  # (K, 2), slots 1..K
    expansion_dist_sq_xy: np.ndarray  # (N, K)


@dataclass(frozen=True)
class SlackSpeeds:
    """Slack speed per slot, m/s; stands in for |v[k]| in the energy row."""

    o: np.ndarray

    def __post_init__(self):
        arr = np.array(self.o, dtype=float)
        if np.any(arr < 0.0):
            raise ValueError("slack speeds must be nonnegative")
        arr.setflags(write=False)
        object.__setattr__(self, "o", arr)


def velocity_lower_bound(v_r, v) -> float:
    """Tangent bound on squared speed: |v_r|^2 + 2 v_r.(v - v_r) <= |v|^2."""
    v_r = np.asarray(v_r, dtype=float)
    v = np.asarray(v, dtype=float)
    return float(v_r @ v_r + 2.0 * v_r @ (v - v_r))


def build_surrogate(
    scenario: Scenario, power: PowerAllocation, traj_r: Trajectory
) -> SurrogateCoefficients:
    """Expand every user's PSNR around ``traj_r`` with the power fixed."""
    if scenario.channel.alpha != 2.0:
        raise ValueError("trajectory surrogates require path-loss exponent 2")
    lam = scenario.spectrum.kept_variances()
    c_slot = scenario.channel.noise_power * lam / (scenario.channel.beta0 * power.p)
    gamma1 = scenario.spectrum.truncation_tail()
    q_xy = traj_r.q[1:, :2]

    users_xy = scenario.user_positions()[:, :2]
    intercepts = np.empty(scenario.n_users)
    slopes = np.empty((scenario.n_users, scenario.slots))
    dist_sq_xy = np.empty_like(slopes)
    for i, user in enumerate(scenario.users):
        u_full = quality.slot_distances_sq(traj_r, user.position)
        denom = float(c_slot @ u_full + gamma1)
        m_eta_sq = scenario.spectrum.total_blocks * scenario.pixel_peak**2
        intercepts[i] = 10.0 * math.log10(m_eta_sq / denom)
        slopes[i] = 10.0 * c_slot / (_LN10 * denom)
        dist_sq_xy[i] = np.sum((q_xy - users_xy[i]) ** 2, axis=1)
    return SurrogateCoefficients(
        intercepts_db=intercepts,
        slopes_db_per_m2=slopes,
        users_xy=users_xy,
        expansion_q_xy=q_xy.copy(),
        expansion_dist_sq_xy=dist_sq_xy,
    )


def surrogate_psnr(coeffs: SurrogateCoefficients, q_xy: np.ndarray) -> np.ndarray:
    """Surrogate PSNR of every user at horizontal slot positions (K, 2)."""
    diffs = q_xy[None, :, :] - coeffs.users_xy[:, None, :]
    dist_sq = np.sum(diffs**2, axis=2)
    corr = np.sum(coeffs.slopes_db_per_m2 * (dist_sq - coeffs.expansion_dist_sq_xy), axis=1)
    return coeffs.intercepts_db - corr


def slack_tightness(traj: Trajectory, slack: SlackSpeeds) -> float:
    """Worst relative gap between the slack speeds and the actual speeds."""
    speeds = traj.speeds()
    return float(np.max(np.abs(speeds - slack.o) / speeds))


# ---------------------------------------------------------------------------
# program assembly


class _Layout:
    """Index map for the stacked variables: 7 per slot, mu last."""

    PER_SLOT = 7

    def __init__(self, slots: int):
        self.slots = slots
        base = np.arange(slots) * self.PER_SLOT
        self.q = np.stack([base, base + 1], axis=1)
        self.v = np.stack([base + 2, base + 3], axis=1)
        self.a = np.stack([base + 4, base + 5], axis=1)
        self.o = base + 6
        self.mu = slots * self.PER_SLOT
        self.n = self.mu + 1


class _BallBlock(ConstraintBlock):
    """|x[idx] - center|^2 - radius^2 <= 0, one row per slot."""

    def __init__(self, layout: _Layout, idx: np.ndarray, centers: np.ndarray, radius_sq):
        self.layout = layout
        self.idx = idx
        self.centers = centers
        self.radius_sq = np.broadcast_to(np.asarray(radius_sq, float), (idx.shape[0],))

    @property
    def size(self):
        return self.idx.shape[0]

    def _points(self, x):
        return x[self.idx] - self.centers

    def values(self, x):
        return np.sum(self._points(x) ** 2, axis=1) - self.radius_sq

    def jacobian(self, x):
        pts = 2.0 * self._points(x)
        rows = np.repeat(np.arange(self.size), 2)
        cols = self.idx.ravel()
        return sp.csr_matrix((pts.ravel(), (rows, cols)), shape=(self.size, self.layout.n))

    def hessian_combination(self, x, w):
        cols = self.idx.ravel()
        data = np.repeat(2.0 * w, 2)
        return sp.csr_matrix((data, (cols, cols)), shape=(self.layout.n, self.layout.n))


class _SlackConeBlock(ConstraintBlock):
    """o^2 - (|v_r|^2 + 2 v_r.(v - v_r)) <= 0, one row per slot."""

    def __init__(self, layout: _Layout, v_r: np.ndarray):
        self.layout = layout
        self.v_r = v_r
        self.v_r_sq = np.sum(v_r**2, axis=1)

    @property
    def size(self):
        return self.layout.slots

    def values(self, x):
        lin = 2.0 * np.sum(self.v_r * x[self.layout.v], axis=1) - self.v_r_sq
        return x[self.layout.o] ** 2 - lin

    def jacobian(self, x):
        k = self.size
        rows = np.concatenate([np.arange(k), np.repeat(np.arange(k), 2)])
        cols = np.concatenate([self.layout.o, self.layout.v.ravel()])
        data = np.concatenate([2.0 * x[self.layout.o], (-2.0 * self.v_r).ravel()])
        return sp.csr_matrix((data, (rows, cols)), shape=(k, self.layout.n))

    def hessian_combination(self, x, w):
        cols = self.layout.o
        return sp.csr_matrix((2.0 * w, (cols, cols)), shape=(self.layout.n, self.layout.n))


class _EnergyBlock(ConstraintBlock):
    """dt * sum_k [c1 |v|^3 + (c2/o)(1 + |a|^2/g0^2)] - budget <= 0."""

    def __init__(self, layout: _Layout, scenario: Scenario, budget: float):
        self.layout = layout
        self.dt = scenario.slot_len
        self.c1 = scenario.propulsion.c1
        self.c2 = scenario.propulsion.c2
        self.g0_sq = scenario.propulsion.g0**2
        self.budget = budget

    @property
    def size(self):
        return 1

    def _parts(self, x):
        v = x[self.layout.v]
        a = x[self.layout.a]
        o = x[self.layout.o]
        speed = np.linalg.norm(v, axis=1)
        acc_sq = np.sum(a**2, axis=1)
        return v, a, o, speed, acc_sq

    def values(self, x):
        v, a, o, speed, acc_sq = self._parts(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            total = self.dt * np.sum(
                self.c1 * speed**3 + (self.c2 / o) * (1.0 + acc_sq / self.g0_sq)
            )
        return np.array([total - self.budget])

    def jacobian(self, x):
        v, a, o, speed, acc_sq = self._parts(x)
        dv = self.dt * self.c1 * 3.0 * speed[:, None] * v
        da = self.dt * (self.c2 / o)[:, None] * (2.0 * a / self.g0_sq)
        do = -self.dt * self.c2 * (1.0 + acc_sq / self.g0_sq) / o**2
        cols = np.concatenate([self.layout.v.ravel(), self.layout.a.ravel(), self.layout.o])
        data = np.concatenate([dv.ravel(), da.ravel(), do])
        rows = np.zeros(cols.size, dtype=int)
        return sp.csr_matrix((data, (rows, cols)), shape=(1, self.layout.n))

    def hessian_combination(self, x, w):
        v, a, o, speed, acc_sq = self._parts(x)
        w0 = float(w[0]) * self.dt
        rows: list[np.ndarray] = []
        cols: list[np.ndarray] = []
        data: list[np.ndarray] = []

        # v block: 3 c1 (|v| I + v v'/|v|)
        vi = self.layout.v
        outer = v[:, :, None] * v[:, None, :] / speed[:, None, None]
        eye = np.eye(2)[None, :, :] * speed[:, None, None]
        hv = 3.0 * self.c1 * (eye + outer) * w0
        rows.append(np.repeat(vi, 2, axis=1).ravel())
        cols.append(np.tile(vi, (1, 2)).ravel())
        data.append(hv.ravel())

        # a block: (2 c2 / (g0^2 o)) I
        ai = self.layout.a
        ha = (2.0 * self.c2 / (self.g0_sq * o)) * w0
        rows.append(ai.ravel())
        cols.append(ai.ravel())
        data.append(np.repeat(ha, 2))

        # a-o cross: -2 c2 a / (g0^2 o^2)
        hao = (-2.0 * self.c2 / (self.g0_sq * o**2))[:, None] * a * w0
        rows.append(ai.ravel())
        cols.append(np.repeat(self.layout.o, 2))
        data.append(hao.ravel())
        rows.append(np.repeat(self.layout.o, 2))
        cols.append(ai.ravel())
        data.append(hao.ravel())

        # o block: 2 c2 (1 + |a|^2/g0^2) / o^3
        ho = 2.0 * self.c2 * (1.0 + acc_sq / self.g0_sq) / o**3 * w0
        rows.append(self.layout.o)
        cols.append(self.layout.o)
        data.append(ho)

        return sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.layout.n, self.layout.n),
        )


class _PsnrSurrogateBlock(ConstraintBlock):
    """mu - surrogate_n(q) <= 0, one row per user."""

    def __init__(self, layout: _Layout, coeffs: SurrogateCoefficients):
        self.layout = layout
        self.coeffs = coeffs

    @property
    def size(self):
        return self.coeffs.intercepts_db.size

    def values(self, x):
        return x[self.layout.mu] - surrogate_psnr(self.coeffs, x[self.layout.q])

    def jacobian(self, x):
        n_users, k = self.coeffs.slopes_db_per_m2.shape
        q = x[self.layout.q]
        diffs = q[None, :, :] - self.coeffs.users_xy[:, None, :]  # (N, K, 2)
        dq = 2.0 * self.coeffs.slopes_db_per_m2[:, :, None] * diffs
        rows = np.repeat(np.arange(n_users), 2 * k)
        cols = np.tile(self.layout.q.ravel(), n_users)
        data = dq.reshape(n_users, -1).ravel()
        jac = sp.csr_matrix((data, (rows, cols)), shape=(n_users, self.layout.n))
        mu_col = sp.csr_matrix(
            (np.ones(n_users), (np.arange(n_users), np.full(n_users, self.layout.mu))),
            shape=(n_users, self.layout.n),
        )
        return jac + mu_col

    def hessian_combination(self, x, w):
        diag = 2.0 * (w @ self.coeffs.slopes_db_per_m2)  # (K,)
        cols = self.layout.q.ravel()
        data = np.repeat(diag, 2)
        return sp.csr_matrix((data, (cols, cols)), shape=(self.layout.n, self.layout.n))


def _equalities(scenario: Scenario, layout: _Layout):
    """Motion equations and endpoint rows as a sparse system A x = b."""
    k = scenario.slots
    dt = scenario.slot_len
    rows, cols, data = [], [], []
    b = np.zeros(4 * k + 2)

    def put(r, c, val):
        rows.append(r)
        cols.append(c)
        data.append(val)

    v0 = scenario.v0[:2]
    a0 = scenario.a0[:2]
    q0 = scenario.start[:2]
    for slot in range(1, k + 1):
        i = slot - 1
        rv = 4 * i
        rq = 4 * i + 2
        for d in range(2):
            put(rv + d, layout.v[i, d], 1.0)
            put(rq + d, layout.q[i, d], 1.0)
            if slot == 1:
                b[rv + d] = v0[d] + a0[d] * dt
                b[rq + d] = q0[d] + v0[d] * dt + 0.5 * a0[d] * dt**2
            else:
                put(rv + d, layout.v[i - 1, d], -1.0)
                put(rv + d, layout.a[i - 1, d], -dt)
                put(rq + d, layout.q[i - 1, d], -1.0)
                put(rq + d, layout.v[i - 1, d], -dt)
                put(rq + d, layout.a[i - 1, d], -0.5 * dt**2)
    for d in range(2):
        put(4 * k + d, layout.q[k - 1, d], 1.0)
        b[4 * k + d] = scenario.end[d]
    a_mat = sp.csr_matrix((data, (rows, cols)), shape=(4 * k + 2, layout.n))
    return a_mat, b


def _speed_floor_rows(layout: _Layout, v_r: np.ndarray, v_min: float) -> LinearInequalities:
    k = layout.slots
    rows = np.repeat(np.arange(k), 2)
    g = sp.csr_matrix(((-2.0 * v_r).ravel(), (rows, layout.v.ravel())), shape=(k, layout.n))
    h = -(v_min**2 + np.sum(v_r**2, axis=1))
    return LinearInequalities(g, h)


def _slack_nonneg_rows(layout: _Layout) -> LinearInequalities:
    k = layout.slots
    g = sp.csr_matrix((-np.ones(k), (np.arange(k), layout.o)), shape=(k, layout.n))
    return LinearInequalities(g, np.zeros(k))


@dataclass
class TrajectoryStep:
    trajectory: Trajectory
    slack: SlackSpeeds
    mu_db: float
    report: SolveReport
    surrogate: SurrogateCoefficients
    kept_start: bool


def _unpack(scenario: Scenario, layout: _Layout, x: np.ndarray) -> Trajectory:
    k = scenario.slots
    q = np.zeros((k + 1, 3))
    v = np.zeros((k + 1, 3))
    a = np.zeros((k + 1, 3))
    q[0], v[0], a[0] = scenario.start, scenario.v0, scenario.a0
    q[1:, :2] = x[layout.q]
    q[1:, 2] = scenario.altitude
    v[1:, :2] = x[layout.v]
    a[1:, :2] = x[layout.a]
    return Trajectory(q=q, v=v, a=a)


def solve_trajectory(
    scenario: Scenario,
    power: PowerAllocation,
    traj_r: Trajectory,
    trust_radius: float | None = None,
    inner_iters: int = 1,
    options: SolverOptions | None = None,
) -> TrajectoryStep:
    """Improve the trajectory against fixed powers via one or more expansions.

    The incoming trajectory seeds its own surrogate (it is feasible for it),
    so the achieved target never drops below the PSNR at ``traj_r``; if a
    solve fails to improve, the expansion point is handed back unchanged.
    The surrogate under-estimates everywhere, so a trust region is not
    needed for soundness; passing ``trust_radius`` adds per-slot step caps
    anyway for instances where damped outer steps help.
    """
    e_c = comm_energy(scenario.coeffs_per_block, scenario.slot_len, power)
    budget = scenario.total_energy - e_c
    layout = _Layout(scenario.slots)
    a_mat, b = _equalities(scenario, layout)

    mu_in, _ = quality.min_psnr(scenario, traj_r, power)
    best = None
    current = traj_r
    for _ in range(max(1, inner_iters)):
        step = _solve_once(scenario, power, current, layout, a_mat, b, budget, trust_radius, options)
        if best is None or step.mu_db > best.mu_db:
            best = step
        current = step.trajectory

    if best.mu_db < mu_in:
        slack = SlackSpeeds(o=traj_r.speeds())
        return TrajectoryStep(
            trajectory=traj_r,
            slack=slack,
            mu_db=mu_in,
            report=best.report,
            surrogate=best.surrogate,
            kept_start=True,
        )
    return best


def _solve_once(
    scenario, power, traj_r, layout, a_mat, b, budget, trust_radius, options
) -> TrajectoryStep:
    coeffs = build_surrogate(scenario, power, traj_r)
    v_r = traj_r.v[1:, :2]
    lim = scenario.limits

    blocks: list[ConstraintBlock] = [
        _BallBlock(layout, layout.a, np.zeros((scenario.slots, 2)), lim.a_max**2),
        _BallBlock(layout, layout.v, np.zeros((scenario.slots, 2)), lim.v_max**2),
        _speed_floor_rows(layout, v_r, lim.v_min),
        _SlackConeBlock(layout, v_r),
        _slack_nonneg_rows(layout),
        _EnergyBlock(layout, scenario, budget),
        _PsnrSurrogateBlock(layout, coeffs),
    ]
    if trust_radius is not None:
        blocks.append(_BallBlock(layout, layout.q, traj_r.q[1:, :2], trust_radius**2))

    x0 = np.zeros(layout.n)
    x0[layout.q] = traj_r.q[1:, :2]
    x0[layout.v] = v_r
    x0[layout.a] = traj_r.a[1:, :2]
    x0[layout.o] = traj_r.speeds() * (1.0 - 1e-8)
    mu_floor = float(np.min(coeffs.intercepts_db))
    x0[layout.mu] = mu_floor - 1e-6

    program = SmoothConvexProgram(
        n=layout.n,
        objective=LinearObjective(
            np.concatenate([np.zeros(layout.n - 1), [-1.0]])
        ),
        inequalities=blocks,
        eq_matrix=a_mat,
        eq_rhs=b,
    )
    if not program.strictly_feasible(x0):
        x0 = phase_one(program, x0)

    if options is None:
        options = SolverOptions(gap_tol=1e-7 * max(1.0, abs(mu_floor)), kkt_tol=1e-6)
    report = solve(program, x0, options)

    traj_new = _unpack(scenario, layout, report.x)
    slack = SlackSpeeds(o=np.maximum(report.x[layout.o], 0.0))
    mu_db, _ = quality.min_psnr(scenario, traj_new, power)
    return TrajectoryStep(
        trajectory=traj_new,
        slack=slack,
        mu_db=mu_db,
        report=report,
        surrogate=coeffs,
        kept_start=False,
    )
