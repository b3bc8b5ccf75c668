"""Command-line experiment runner.

Commands:
    solve     full pipeline (deadbeat init + learning) on a plant file
    bench     ensemble benchmark over a list of state dimensions
    noisy     measurement-noise Monte-Carlo study
    pe-check  excitation/rank verdicts for a recorded data file
    deadbeat  data-based deadbeat gain from a plant or data file

Exit codes: 0 success, 1 check/verdict or pipeline failure, 2 usage or
parse errors.  All numeric CSV output uses 17 significant digits so values
round-trip exactly.  The DDLQR_LOG environment variable (debug/info/...)
selects log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import robustness
from .deadbeat import deadbeat_from_data, min_samples
from .errors import DataFormatError, DdlqrError, DimensionError
from .excitation import (check_willems_rank, generate_pe_input,
                         is_persistently_exciting)
from .oracle import CostWeights, lqr_gain, solve_dare
from .qlearn import LearningData, QLearningResult, eta_dim, run_qlearning
from .systems import (LinearSystem, Trajectory, closed_loop, load_system,
                      random_controllable_system, simulate, spectral_radius)

logger = logging.getLogger(__name__)

BENCH_CSV_HEADER = "n,trials,avg_error,avg_time_seconds,failures"
NOISY_CSV_HEADER = "trial,seed,error_norm,stabilizing,margin_lhs,margin_ok"
DEFAULT_BENCH_RADIUS = 0.95


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def load_weights(path: str) -> CostWeights:
    """Read cost weights from a plain-text file.

    Format mirrors the plant files: header ``n m``, then n rows of Q and
    m rows of R.
    """
    from .systems import _collect_rows, _numeric_lines
    rows = _numeric_lines(path)
    if not rows:
        raise DataFormatError("empty file", path=path)
    lineno, header = rows[0]
    if len(header) != 2 or any(v != int(v) or v < 1 for v in header):
        raise DataFormatError("header must be two positive integers 'n m'",
                              path=path, line=lineno)
    n, m = int(header[0]), int(header[1])
    body = rows[1:]
    if len(body) != n + m:
        raise DataFormatError(
            f"expected {n + m} matrix rows after the header, found {len(body)}",
            path=path, line=rows[-1][0])
    Q = _collect_rows(body[:n], n, "Q", path)
    R = _collect_rows(body[n:], m, "R", path)
    try:
        return CostWeights(Q=Q, R=R)
    except DimensionError as exc:
        raise DataFormatError(str(exc), path=path) from exc


def load_data_file(path: str) -> tuple[np.ndarray, np.ndarray | None]:
    """Read a recorded experiment: header ``n m N``, then N rows of u_k x_k.

    ``n = 0`` marks an input-only file (no states recorded).

    Returns:
        (inputs, states) with states None for input-only files.
    """
    from .systems import _numeric_lines
    rows = _numeric_lines(path)
    if not rows:
        raise DataFormatError("empty file", path=path)
    lineno, header = rows[0]
    if len(header) != 3 or any(v != int(v) for v in header) or header[0] < 0 \
            or header[1] < 1 or header[2] < 1:
        raise DataFormatError("header must be integers 'n m N' (n >= 0)",
                              path=path, line=lineno)
    n, m, N = (int(v) for v in header)
    body = rows[1:]
    if len(body) != N:
        raise DataFormatError(f"expected {N} data rows, found {len(body)}",
                              path=path, line=rows[-1][0])
    U = np.empty((N, m))
    X = np.empty((N, n)) if n > 0 else None
    for k, (lineno, row) in enumerate(body):
        if len(row) != m + n:
            raise DataFormatError(
                f"data row must hold {m} input and {n} state entries, "
                f"found {len(row)}", path=path, line=lineno)
        U[k] = row[:m]
        if X is not None:
            X[k] = row[m:]
    return U, X


def save_data_file(path: str, inputs: np.ndarray, states: np.ndarray) -> None:
    """Write a recorded experiment in the format of :func:`load_data_file`."""
    U = np.asarray(inputs, dtype=float)
    X = np.asarray(states, dtype=float)[:U.shape[0]]
    with open(path, "w") as fh:
        fh.write(f"{X.shape[1]} {U.shape[1]} {U.shape[0]}\n")
        for u, x in zip(U, X):
            nums = list(u) + list(x)
            fh.write(" ".join(_fmt(v) for v in nums) + "\n")


@dataclass(frozen=True)
class PipelineOutcome:
    """Result of the deadbeat + learning pipeline on one plant."""

    k_db: np.ndarray
    result: QLearningResult


def run_pipeline(sys: LinearSystem, weights: CostWeights, seed,
                 iterations: int | None = None, eps: float = 1e-10,
                 max_iter: int = 50, amplitude: float = 1.0,
                 audit: bool = False) -> PipelineOutcome:
    """One excitation experiment driving both design stages.

    Collects eta+1 persistently excited samples, computes the deadbeat
    gain from them, and runs the learning loop on the same batch seeded
    with that gain.
    """
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(-1.0, 1.0, sys.n)
    eta = eta_dim(sys.n, sys.m)
    U = generate_pe_input(sys.m, sys.n + 1, eta + 1, rng, amplitude=amplitude)
    traj = simulate(sys, x0, U)
    k_db = deadbeat_from_data(traj)
    data = LearningData.from_trajectory(traj)
    result = run_qlearning(data, k_db, weights, eps=eps, max_iter=max_iter,
                           fixed_iterations=iterations,
                           audit_system=sys if audit else None)
    return PipelineOutcome(k_db=k_db, result=result)


def _print_gain(K: np.ndarray) -> None:
    for row in np.atleast_2d(K):
        print("  " + "  ".join(_fmt(v) for v in row))


def cmd_solve(args: argparse.Namespace) -> int:
    sys_ = load_system(args.system)
    weights = (load_weights(args.weights) if args.weights
               else CostWeights.identity(sys_.n, sys_.m))
    if weights.n != sys_.n or weights.m != sys_.m:
        raise DataFormatError("weights do not match the plant dimensions",
                              path=args.weights)
    outcome = run_pipeline(sys_, weights, args.seed, iterations=args.iterations,
                           eps=args.eps, audit=args.audit)
    result = outcome.result
    report = result.report()
    report["deadbeat_gain"] = outcome.k_db.tolist()
    if args.audit:
        P = solve_dare(sys_, weights)
        kstar = lqr_gain(sys_, weights, P)
        report["audit"] = {
            "gain_error_vs_oracle": float(np.linalg.norm(result.gain - kstar, 2)),
            "closed_loop_radius": spectral_radius(closed_loop(sys_, result.gain)),
            "per_iteration_radius": [r.closed_loop_radius
                                     for r in result.diagnostics.records],
        }
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=2)
    print(f"iterations: {result.iterations}  converged: {result.converged}  "
          f"learning time: {result.wall_time_seconds:.6f} s")
    print("final gain (u = -K x):")
    _print_gain(result.gain)
    if args.audit:
        print(f"audit: |K - K*| = {_fmt(report['audit']['gain_error_vs_oracle'])}, "
              f"closed-loop radius = {_fmt(report['audit']['closed_loop_radius'])}")
    return 0


def _bench_trial(args: tuple) -> tuple[float, float, str | None]:
    (n, m, trial, seed, iterations, radius, amplitude) = args
    rng = np.random.default_rng([seed, n, trial])
    sys_ = random_controllable_system(n, m, rng, spectral_radius_bound=radius)
    weights = CostWeights.identity(n, m)
    try:
        outcome = run_pipeline(sys_, weights, rng, iterations=iterations,
                               amplitude=amplitude)
    except DdlqrError as exc:
        return float("nan"), float("nan"), str(exc)
    kstar = lqr_gain(sys_, weights, solve_dare(sys_, weights))
    err = float(np.linalg.norm(outcome.result.gain - kstar, 2))
    return err, outcome.result.wall_time_seconds, None


def cmd_bench(args: argparse.Namespace) -> int:
    dims = [int(v) for v in args.dims.split(",")]
    radius = None if args.spectral_radius <= 0 else args.spectral_radius
    lines = [BENCH_CSV_HEADER]
    for n in dims:
        arglist = [(n, args.m, t, args.seed, args.iterations, radius,
                    args.amplitude) for t in range(args.trials)]
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_bench_trial, arglist))
        else:
            results = [_bench_trial(a) for a in arglist]
        errs = [e for e, _, fail in results if fail is None]
        times = [t for _, t, fail in results if fail is None]
        failures = sum(1 for *_, fail in results if fail is not None)
        avg_err = float(np.mean(errs)) if errs else float("nan")
        avg_time = float(np.mean(times)) if times else float("nan")
        lines.append(f"{n},{args.trials},{_fmt(avg_err)},{_fmt(avg_time)},{failures}")
        print(f"n={n}: avg error {avg_err:.3e}, avg learning time {avg_time:.4f} s, "
              f"{failures} failures")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    return 0


def cmd_noisy(args: argparse.Namespace) -> int:
    study = robustness.noisy_experiment(
        args.n, args.m, args.w_max, args.trials, args.iterations, args.seed,
        jobs=args.jobs)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(NOISY_CSV_HEADER + "\n")
            for r in study.trials:
                fh.write(f"{r.trial},{r.seed},{_fmt(r.error_norm)},"
                         f"{int(r.stabilizing)},{_fmt(r.margin_lhs)},"
                         f"{int(r.margin_ok)}\n")
    print(f"trials: {len(study.trials)}  mean error: {_fmt(study.mean_error)}  "
          f"max error: {_fmt(study.max_error)}  "
          f"destabilized: {study.destabilized_count}  failed: {study.failed_count}")
    return 0


def cmd_pe_check(args: argparse.Namespace) -> int:
    U, X = load_data_file(args.data)
    m = U.shape[1]
    L = args.order
    need = (m + 1) * L - 1
    if U.shape[0] < need:
        print(f"cannot certify order {L}: need N >= (m+1)L-1 = {need} samples, "
              f"file has {U.shape[0]}")
        return 1
    pe = is_persistently_exciting(U, L)
    if pe:
        print(f"input is persistently exciting of order {L}")
    else:
        print(f"input is NOT persistently exciting of order {L}")
    ok = pe
    if X is not None:
        traj = Trajectory(inputs=U, states=X)
        willems = check_willems_rank(traj, 1)
        print(f"stacked data rank condition (depth 1): "
              f"{'holds' if willems else 'FAILS'}")
        ok = ok and willems
    return 0 if ok else 1


def cmd_deadbeat(args: argparse.Namespace) -> int:
    sys_ = None
    if args.data:
        U, X = load_data_file(args.data)
        if X is None:
            raise DataFormatError("deadbeat design needs recorded states",
                                  path=args.data)
        traj = Trajectory(inputs=U, states=X)
        if args.system:
            sys_ = load_system(args.system)
    else:
        if not args.system:
            raise DataFormatError("provide a system file or --data")
        sys_ = load_system(args.system)
        rng = np.random.default_rng(args.seed)
        N = min_samples(sys_.n, sys_.m)
        U = generate_pe_input(sys_.m, sys_.n + 1, N, rng)
        traj = simulate(sys_, rng.uniform(-1.0, 1.0, sys_.n), U)
    k_db = deadbeat_from_data(traj)
    print("deadbeat gain (u = -K x):")
    _print_gain(k_db)
    if args.audit:
        if sys_ is None:
            print("audit requested but no system file given; skipping")
        else:
            rho = spectral_radius(closed_loop(sys_, k_db))
            print(f"audit: max closed-loop eigenvalue magnitude = {_fmt(rho)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddlqr",
        description="Data-driven LQR: off-policy Q-learning experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="deadbeat + learning pipeline on a plant file")
    p.add_argument("system", help="plant file ('n m' header, rows of A then B)")
    p.add_argument("--weights", help="cost file ('n m' header, rows of Q then R)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iterations", type=int, default=None,
                   help="run exactly this many iterations (overrides --eps)")
    p.add_argument("--eps", type=float, default=1e-10,
                   help="gain-step stopping tolerance")
    p.add_argument("--out", help="write the JSON run report here")
    p.add_argument("--audit", action="store_true",
                   help="compare against the exact solution of the plant file")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="ensemble benchmark across dimensions")
    p.add_argument("--dims", default="3,5,10,20,50",
                   help="comma-separated state dimensions")
    p.add_argument("--m", type=int, default=2, help="input dimension")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--amplitude", type=float, default=1.0,
                   help="excitation amplitude")
    p.add_argument("--spectral-radius", type=float, default=DEFAULT_BENCH_RADIUS,
                   help="ensemble normalization; <= 0 keeps the raw ensemble "
                        "(expect overflow beyond n = 10; see README)")
    p.add_argument("--out", help="write the CSV table here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("noisy", help="measurement-noise Monte-Carlo study")
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--w-max", type=float, default=1e-3)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="write the per-trial CSV here")
    p.set_defaults(func=cmd_noisy)

    p = sub.add_parser("pe-check", help="excitation/rank verdicts for a data file")
    p.add_argument("data", help="data file ('n m N' header, rows of u_k x_k)")
    p.add_argument("--order", type=int, required=True)
    p.set_defaults(func=cmd_pe_check)

    p = sub.add_parser("deadbeat", help="data-based deadbeat gain")
    p.add_argument("system", nargs="?", help="plant file (simulates its own experiment)")
    p.add_argument("--data", help="use a recorded data file instead")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--audit", action="store_true",
                   help="report the true closed-loop spectrum (needs the system file)")
    p.set_defaults(func=cmd_deadbeat)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("DDLQR_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(name)s %(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DdlqrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
