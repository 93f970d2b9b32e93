"""Command-line front end: build a problem, run solvers, write a trace CSV.

Example::

    blockcd --problem synthetic --blocks 4 --solver aarbcd,arbcd \\
        --sampling sqrt-lip --epochs 500 --reps 50 --seed 7 --out trace.csv

The CLI only maps flags onto :class:`~blockcd.harness.ExperimentConfig`
and calls the harness, so every run can be reproduced from Python.
"""

import argparse
import dataclasses
import logging
import sys


from .blocks import PartitionError
from .data import CsvError, load_csv, make_quadratic
from .harness import (SAMPLINGS, SOLVERS, ConfigError, ExperimentConfig, bound_report_for,
                      build_problem, default_workers, run_experiment, write_trace_csv)
from .schedule import ScheduleError
from .solvers import SolverError

__all__ = ["build_parser", "parse_args", "ingest_csv", "configs_from_args", "main"]

log = logging.getLogger("blockcd")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _solver_list(text):
    ids = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in ids if s not in SOLVERS]
    if not ids or bad:
        raise argparse.ArgumentTypeError(f"unknown solver id(s) {bad or text!r}; choose from {', '.join(SOLVERS)}")
    return ids


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser():
    p = _Parser(prog="blockcd", description="Block coordinate descent convergence experiments.")
    p.add_argument("--problem", default="synthetic",
                   help="'synthetic' or the path of a numeric CSV (rows are samples)")
    p.add_argument("--label-col", type=int, default=-1, help="label column of the CSV (default: last)")
    p.add_argument("--scale", action="store_true", help="divide the CSV design matrix by its max |entry|")
    p.add_argument("--csv-header", action="store_true", help="skip the first CSV row")
    p.add_argument("--m", type=_positive_int, default=60, help="synthetic: number of samples")
    p.add_argument("--n-coords", type=_positive_int, default=30, help="synthetic: number of coordinates")
    p.add_argument("--spread", type=float, default=100.0, help="synthetic: block smoothness spread")
    p.add_argument("--profile", choices=("geometric", "outlier", "correlated"), default="geometric",
                   help="synthetic: smoothness profile across blocks")
    p.add_argument("--problem-seed", type=int, default=0, help="synthetic: data seed")
    p.add_argument("--ridge", type=float, default=0.0, help="ridge penalty lambda")
    p.add_argument("--blocks", type=_positive_int, default=None, help="number of blocks")
    p.add_argument("--block-size", type=_positive_int, default=None, help="coordinates per block")
    p.add_argument("--nonsmooth-last", action="store_true",
                   help="treat the last block as non-smooth (L_n = inf)")
    p.add_argument("--empty-exact-block", action="store_true",
                   help="move to an empty exactly-minimized block (plain coordinate descent)")
    p.add_argument("--start", choices=("zeros", "exact-last"), default="zeros",
                   help="starting point: zeros, or zeros then exact minimization of the last block")
    p.add_argument("--solver", type=_solver_list, default=["arbcd"],
                   help=f"comma-separated solver ids from {{{','.join(SOLVERS)}}}")
    p.add_argument("--sampling", choices=tuple(SAMPLINGS), default="lip", help="block sampling rule")
    p.add_argument("--epochs", type=_positive_int, default=100)
    p.add_argument("--reps", type=_positive_int, default=50, help="repetitions per solver")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--workers", type=_positive_int, default=None,
                   help="worker processes (default: $BLOCKCD_WORKERS or 1)")
    p.add_argument("--verify-bounds", action="store_true",
                   help="append theoretical bound checks as comment lines")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_args(argv=None):
    """Parse and validate flags; exits with status 2 on usage or conflict errors."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.blocks is not None and args.block_size is not None:
        parser.error("--blocks and --block-size are mutually exclusive")
    if args.ridge < 0:
        parser.error("--ridge must be >= 0")
    if args.spread < 1:
        parser.error("--spread must be >= 1")
    if args.workers is None:
        args.workers = default_workers()
    try:
        for cfg in configs_from_args(args):
            cfg.validate()
    except ConfigError as exc:
        parser.error(str(exc))
    return args


def configs_from_args(args):
    """One :class:`ExperimentConfig` per requested solver."""
    base = dict(
        sampling=args.sampling, epochs=args.epochs, repetitions=args.reps, seed=args.seed,
        problem=args.problem, m=args.m, n_coords=args.n_coords, spread=args.spread,
        profile=args.profile, problem_seed=args.problem_seed, label_col=args.label_col,
        scale=args.scale, header=args.csv_header, n_blocks=args.blocks, block_size=args.block_size,
        ridge=args.ridge, nonsmooth_last=args.nonsmooth_last,
        empty_exact_block=args.empty_exact_block, start=args.start, workers=args.workers,
    )
    return [ExperimentConfig(solver=s, **base) for s in args.solver]


def ingest_csv(path, label_col=-1, scale=False, header=False, n_blocks=None, block_size=None,
               lam=0.0):
    """Load a CSV into a :class:`QuadraticProblem` and log its size and smoothness range."""
    A, b = load_csv(path, label_col=label_col, scale=scale, header=header)
    if n_blocks is None and block_size is None:
        block_size = min(10, A.shape[1])
    prob = make_quadratic(A, b, n_blocks=n_blocks, block_size=block_size, lam=lam)
    L = prob.coordinate_smoothness()
    log.info("%s: m=%d N=%d, coordinate L in [%.3g, %.3g], %d blocks", path, A.shape[0], A.shape[1],
             L.min(), L.max(), prob.partition.n_blocks)
    return prob


def main(argv=None):
    """Run the CLI; returns a process exit code."""
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    configs = configs_from_args(args)
    try:
        # fail early on an unwritable destination
        with open(args.out, "a"):
            pass
    except OSError as exc:
        print(f"blockcd: cannot write {args.out}: {exc}", file=sys.stderr)
        return 1
    try:
        problem = build_problem(configs[0])
        if configs[0].problem != "synthetic":
            L = problem.coordinate_smoothness()
            log.info("m=%d N=%d, coordinate L in [%.3g, %.3g]", problem.A.shape[0], problem.n_coords,
                     L.min(), L.max())
        traces, comments = [], []
        for cfg in configs:
            tr = run_experiment(cfg, problem)
            traces.append(tr)
            comments.extend(f"{cfg.solver}: {d}" for d in tr.diagnostics)
            if args.verify_bounds:
                rep = bound_report_for(tr, problem, cfg)
                if rep is None:
                    comments.append(f"bound {cfg.solver}: no bound applies to this configuration")
                else:
                    comments.extend(f"{cfg.solver} {line}" for line in rep.lines())
        shared = dataclasses.replace(configs[0], solver=",".join(args.solver))
        write_trace_csv(args.out, traces, shared, comments)
    except (ConfigError, CsvError, PartitionError, ScheduleError, SolverError, OSError) as exc:
        print(f"blockcd: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
