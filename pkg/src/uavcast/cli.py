"""Command-line front end.

Subcommands: gen-scenario writes a scenario file; optimize runs the
alternating optimizer and emits trajectory/power/iterations/psnr CSVs
plus a summary; simulate validates the analytic model with the
Monte-Carlo link chain; sweep repeats optimize across K, E_t or N.

Exit codes: 0 success, 2 infeasible instance, 3 non-convergence or failed
certification, 1 configuration or I/O errors. Any scenario key can be
overridden with an UAVCAST_<KEY> environment variable.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .bcd import BcdSettings
from .harness import (
    default_scenario,
    read_solution,
    run_optimize,
    run_simulate,
    sweep,
    write_psnr_csv,
)
from .scenario import ScenarioError, initial_solution, load_scenario, save_scenario


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uavcast",
        description="Max-min PSNR optimization of a UAV video broadcast link",
    )
    parser.add_argument("--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-scenario", help="write a scenario file with seeded users")
    gen.add_argument("--out", required=True, help="output scenario path (YAML)")
    gen.add_argument("--seed", type=int, default=7)
    gen.add_argument("--users", type=int, default=4)
    gen.add_argument("--slots", type=int, default=180)
    gen.add_argument("--total-energy-j", type=float, default=3000.0)

    opt = sub.add_parser("optimize", help="jointly optimize powers and trajectory")
    opt.add_argument("--config", required=True, help="scenario file")
    opt.add_argument("--out", required=True, help="output directory")
    opt.add_argument("--threshold", type=float, default=1e-4,
                     help="relative improvement threshold in the linear scale")
    opt.add_argument("--max-outer", type=int, default=100)

    sim = sub.add_parser("simulate", help="Monte-Carlo validation of the analytic model")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int, default=7)
    sim.add_argument("--mode", choices=["analytic", "montecarlo"], default="montecarlo")
    sim.add_argument("--trials", type=int, default=2)
    sim.add_argument("--solution", default=None,
                     help="directory with a previous optimize run; default: straight line")

    sw = sub.add_parser("sweep", help="optimize across a parameter range")
    sw.add_argument("--config", required=True)
    sw.add_argument("--out", required=True)
    sw.add_argument("--param", choices=["K", "E_t", "N"], required=True)
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--seed", type=int, default=7)
    sw.add_argument("--threshold", type=float, default=1e-4)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _dispatch(args)
    except (ScenarioError, OSError, ValueError) as exc:
        print(f"uavcast: error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "gen-scenario":
        scenario = default_scenario(
            seed=args.seed,
            n_users=args.users,
            slots=args.slots,
            total_energy_j=args.total_energy_j,
        )
        save_scenario(scenario, args.out)
        print(f"wrote {args.out}")
        return 0

    if args.command == "optimize":
        scenario = load_scenario(args.config)
        settings = BcdSettings(threshold=args.threshold, max_outer=args.max_outer)
        run = run_optimize(scenario, settings=settings, out_dir=args.out)
        if run.exit_code == 2:
            print(f"infeasible: {run.result.message}", file=sys.stderr)
        else:
            print(
                f"{run.result.status}: min PSNR {run.result.mu_db:.4f} dB "
                f"after {run.result.outer_iters} outer iterations"
            )
        return run.exit_code

    if args.command == "simulate":
        scenario = load_scenario(args.config)
        if args.solution is not None:
            traj, power = read_solution(args.solution)
        else:
            traj, power = initial_solution(scenario)
        if args.mode == "analytic":
            import os

            os.makedirs(args.out, exist_ok=True)
            write_psnr_csv(os.path.join(args.out, "psnr.csv"), scenario, traj, power)
            print(f"wrote analytic PSNR table to {args.out}/psnr.csv")
            return 0
        rows = run_simulate(
            scenario, traj, power, seed=args.seed, trials=args.trials, out_dir=args.out
        )
        for user, mode, emp, ana, trials in rows:
            print(f"u{user} {mode}: empirical {emp:.3f} dB, analytic {ana:.3f} dB ({trials} trials)")
        return 0

    if args.command == "sweep":
        scenario = load_scenario(args.config)
        values = [float(v) for v in args.values.split(",") if v.strip()]
        if not values:
            raise ValueError("--values is empty")
        settings = BcdSettings(threshold=args.threshold)
        rows = sweep(scenario, args.param, values, seed=args.seed,
                     settings=settings, out_dir=args.out)
        for row in rows:
            print(f"{args.param}={row.value:g}: {row.status}, min PSNR {row.mu_db:.4f} dB")
        if any(r.status == "infeasible" for r in rows):
            return 2
        if any(r.status not in ("converged",) for r in rows):
            return 3
        return 0

    raise ValueError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
