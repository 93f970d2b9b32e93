"""Experiment orchestration: repetitions, epoch accounting, traces and bound checks.

An epoch is ``n`` block updates for an ``n``-block partition. Methods
that do more work per iteration are charged a cost factor: one
AR-BCD iteration counts as 2 updates and one accelerated iteration as
1.5, so ``floor(e * n / cost)`` raw iterations have run at epoch ``e``.
"""

import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import load_csv, make_quadratic, make_synthetic
from .objective import QuadraticProblem, StructuredObjective
from .schedule import ScheduleError, accelerated_parameters, make_sampling, rng_stream
from .solvers import (SolverError, run_aarbcd_efficient, run_aarbcd_naive, run_am, run_arbcd,
                      run_cyclic, run_rcdm)

__all__ = [
    "SOLVERS",
    "SAMPLINGS",
    "ConfigError",
    "ExperimentConfig",
    "Trace",
    "BoundReport",
    "cost_factor",
    "build_problem",
    "estimate_fstar",
    "epoch_iterations",
    "run_solver",
    "run_experiment",
    "theorem4_bound",
    "theorem1_geometric_bound",
    "verify_bound",
    "verify_theorem4_bound",
    "fit_rate_exponent",
    "write_trace_csv",
    "starting_point",
    "verify_theorem1_geometric",
    "bound_report_for",
]

log = logging.getLogger(__name__)

SOLVERS = ("am", "rcdm", "rcdm-g", "cbcd", "cbcd-g", "arbcd", "aarbcd", "aarbcd-naive")
# CLI sampling ids -> schedule modes
SAMPLINGS = {"lip": "prop-L", "sqrt-lip": "prop-sqrtL", "uniform": "uniform"}
ACCELERATED = ("aarbcd", "aarbcd-naive")
_COST = {"am": 1.0, "rcdm": 1.0, "rcdm-g": 1.0, "cbcd": 1.0, "cbcd-g": 1.0,
         "arbcd": 2.0, "aarbcd": 1.5, "aarbcd-naive": 1.5}


class ConfigError(ValueError):
    """Inconsistent experiment configuration."""


def cost_factor(solver, has_exact_block=True):
    """Work per iteration relative to one block gradient step.

    Without an exact block, AR-BCD is plain randomized descent and the
    accelerated method does two steps per iteration like other
    accelerated coordinate methods, so both cost 1.
    """
    if solver not in _COST:
        raise ConfigError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
    if not has_exact_block:
        return 1.0
    return _COST[solver]


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one solver's trace.

    ``problem`` is ``"synthetic"`` or a CSV path. For synthetic problems
    ``m``, ``n_coords``, ``spread``, ``profile`` and ``problem_seed`` apply;
    for CSV input ``label_col``, ``scale`` and ``header``. Exactly one of
    ``n_blocks`` or ``block_size`` is used to partition the coordinates.
    """

    solver: str = "arbcd"
    sampling: str = "lip"
    epochs: int = 100
    repetitions: int = 50
    seed: int = 0
    problem: str = "synthetic"
    m: int = 60
    n_coords: int = 30
    spread: float = 100.0
    profile: str = "geometric"
    problem_seed: int = 0
    label_col: int = -1
    scale: bool = False
    header: bool = False
    n_blocks: int = None
    block_size: int = None
    ridge: float = 0.0
    nonsmooth_last: bool = False
    empty_exact_block: bool = False
    start: str = "zeros"
    workers: int = 1

    def validate(self):
        if self.solver not in SOLVERS:
            raise ConfigError(f"unknown solver {self.solver!r}; expected one of {SOLVERS}")
        if self.sampling not in SAMPLINGS:
            raise ConfigError(f"unknown sampling {self.sampling!r}; expected one of {tuple(SAMPLINGS)}")
        if self.epochs < 1 or self.repetitions < 1:
            raise ConfigError("epochs and repetitions must be >= 1")
        if self.n_blocks is not None and self.block_size is not None:
            raise ConfigError("give n_blocks or block_size, not both")
        if self.ridge < 0:
            raise ConfigError("ridge must be >= 0")
        if self.start not in ("zeros", "exact-last"):
            raise ConfigError(f"unknown start {self.start!r}")
        if self.solver in ACCELERATED and self.sampling == "lip":
            raise ConfigError("accelerated solvers need 'sqrt-lip' or 'uniform' sampling")
        if self.solver == "am" and self.empty_exact_block:
            raise ConfigError("alternating minimization needs two non-empty blocks")
        return self


@dataclass
class Trace:
    """Per-epoch optimality gaps of one solver across repetitions.

    ``gaps[r, e]`` is ``f - f*`` of repetition ``r`` after epoch ``e``
    (epoch 0 is the starting point).
    """

    solver: str
    epochs: np.ndarray
    iterations: np.ndarray
    gaps: np.ndarray
    cost: float
    f_star: float
    diagnostics: list = field(default_factory=list)

    @property
    def median(self):
        return np.median(self.gaps, axis=0)

    @property
    def q25(self):
        return np.percentile(self.gaps, 25, axis=0)

    @property
    def q75(self):
        return np.percentile(self.gaps, 75, axis=0)

    @property
    def mean(self):
        return self.gaps.mean(axis=0)

    @property
    def stderr(self):
        r = self.gaps.shape[0]
        if r < 2:
            return np.zeros(self.gaps.shape[1])
        return self.gaps.std(axis=0, ddof=1) / math.sqrt(r)


def build_problem(config):
    """Build the :class:`QuadraticProblem` described by ``config``."""
    n_blocks, block_size = config.n_blocks, config.block_size
    if config.problem == "synthetic":
        nb = n_blocks if n_blocks is not None else max(config.n_coords // (block_size or 10), 2)
        problem = make_synthetic(config.m, config.n_coords, nb, spread=config.spread,
                                 profile=config.profile, lam=config.ridge, seed=config.problem_seed,
                                 nonsmooth_last=config.nonsmooth_last)
        if block_size is not None and n_blocks is None:
            problem = make_quadratic(problem.A, problem.b, block_size=block_size, lam=config.ridge,
                                     nonsmooth_last=config.nonsmooth_last)
    else:
        A, b = load_csv(config.problem, label_col=config.label_col, scale=config.scale,
                        header=config.header)
        if n_blocks is None and block_size is None:
            block_size = 10
        problem = make_quadratic(A, b, n_blocks=n_blocks, block_size=block_size, lam=config.ridge,
                                 nonsmooth_last=config.nonsmooth_last)
    if config.empty_exact_block:
        problem = QuadraticProblem(problem.A, problem.b, problem.partition.with_empty_exact_block(),
                                   lam=problem.lam)
    return problem


def estimate_fstar(problem):
    """Optimal value of a least-squares problem via a direct minimum-norm solve."""
    if not isinstance(problem, QuadraticProblem):
        raise TypeError("direct f* estimation needs a QuadraticProblem")
    return problem.value(problem.optimum())


def epoch_iterations(n_blocks, epochs, cost):
    """Raw iteration count completed at each epoch boundary ``0 .. epochs``."""
    e = np.arange(epochs + 1)
    # small guard so exact multiples are not lost to floating error
    return np.floor(e * n_blocks / cost + 1e-9).astype(int)


def starting_point(problem, start="zeros"):
    x = np.zeros(problem.n_coords)
    if start == "exact-last":
        problem.exact_block_min(x, problem.partition.exact_block, out=x)
    return x


def run_solver(problem, solver, sampling, iters, rng, x1, record_at=None, measure=None,
               callback=None, structured=None):
    """Dispatch one run of ``solver`` (an id from :data:`SOLVERS`).

    ``sampling`` is a CLI id (``lip``, ``sqrt-lip``, ``uniform``).
    """
    mode = SAMPLINGS[sampling]
    prof = problem.smoothness_profile()
    sizes = problem.partition.sizes
    kw = dict(record_at=record_at, measure=measure)
    if solver == "am":
        return run_am(problem, x1, iters, callback=callback, **kw)
    if solver in ("rcdm", "rcdm-g"):
        # RCDM samples all blocks, so any L-weighted rule needs a finite L_n
        dist = make_sampling(prof, mode, include_last=True, sizes=sizes)
        return run_rcdm(problem, dist, x1, iters, rng, exact_last=solver == "rcdm", callback=callback,
                        **kw)
    if solver in ("cbcd", "cbcd-g"):
        return run_cyclic(problem, x1, iters, rng=rng, exact_last=solver == "cbcd", callback=callback,
                          **kw)
    if solver == "arbcd":
        dist = make_sampling(prof, mode, sizes=sizes)
        return run_arbcd(problem, dist, x1, iters, rng, callback=callback, **kw)
    if solver in ACCELERATED:
        dist, sigma, c = accelerated_parameters(prof, mode)
        if solver == "aarbcd":
            obj = structured if structured is not None else StructuredObjective.from_quadratic(problem)
            return run_aarbcd_efficient(obj, dist, x1, iters, rng, sigma, c, **kw)
        return run_aarbcd_naive(problem, dist, x1, iters, rng, sigma, c, callback=callback, **kw)
    raise ConfigError(f"unknown solver {solver!r}")


def _run_rep(args):
    problem, config, rep, iters_at, structured = args
    rng = rng_stream(config.seed, rep)
    x1 = starting_point(problem, config.start)
    res = run_solver(problem, config.solver, config.sampling, int(iters_at[-1]), rng, x1,
                     record_at=iters_at, measure=problem.suboptimality, structured=structured)
    return res.values, res.diagnostics


def run_experiment(config, problem=None):
    """Run ``config.repetitions`` seeded runs and aggregate per-epoch gaps.

    Repetition ``r`` uses the stream ``rng_stream(config.seed, r)``; the
    trace is deterministic given the config. Gaps are
    ``f(x) - f*`` with ``f*`` from a direct solve.
    """
    config.validate()
    if problem is None:
        problem = build_problem(config)
    part = problem.partition
    has_exact = part.sizes[-1] > 0
    cost = cost_factor(config.solver, has_exact)
    iters_at = epoch_iterations(part.n_blocks, config.epochs, cost)
    # zero-iteration dry run surfaces configuration errors before any work
    try:
        run_solver(problem, config.solver, config.sampling, 0, rng_stream(config.seed, 0),
                   starting_point(problem, config.start))
    except (ScheduleError, SolverError) as exc:
        raise ConfigError(str(exc)) from exc
    f_star = estimate_fstar(problem)
    structured = StructuredObjective.from_quadratic(problem) if config.solver == "aarbcd" else None
    jobs = [(problem, config, r, iters_at, structured) for r in range(config.repetitions)]
    workers = max(1, int(config.workers))
    results = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for r, out in enumerate(pool.map(_run_rep, jobs)):
                results.append(out)
    else:
        for r, job in enumerate(jobs):
            try:
                results.append(_run_rep(job))
            except (SolverError, ScheduleError) as exc:
                raise type(exc)(f"repetition {r}: {exc}") from exc
    gaps = np.vstack([v for v, _ in results])
    diagnostics = [f"rep {r}: {m}" for r, (_, msgs) in enumerate(results) for m in msgs]
    log.info("%s: %d reps x %d iterations", config.solver, config.repetitions, iters_at[-1])
    return Trace(config.solver, np.arange(config.epochs + 1), iters_at, gaps, cost, f_star, diagnostics)


@dataclass
class BoundReport:
    """Mean gap versus a theoretical bound at each checked iteration."""

    name: str
    ks: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    bound: np.ndarray
    slack: float = 3.0

    @property
    def violations(self):
        """Iterations where the mean exceeds the bound by more than ``slack`` standard errors."""
        return self.ks[self.mean - self.slack * self.stderr > self.bound]

    @property
    def ok(self):
        return self.violations.size == 0

    @property
    def min_margin(self):
        """Smallest ``bound / mean`` ratio (``inf`` where the mean is 0)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(self.mean > 0, self.bound / self.mean, np.inf)
        return float(np.min(r))

    def lines(self):
        status = "ok" if self.ok else f"VIOLATED at k={self.violations[:5].tolist()}"
        return [
            f"bound {self.name}: {status}",
            f"bound {self.name}: checked {self.ks.size} iterations in [{self.ks[0]}, {self.ks[-1]}], "
            f"min bound/mean = {self.min_margin:.6g}",
        ]


def _smooth_block_dist_sq(partition, x_star, x1):
    return np.array([float(np.sum((x_star[idx] - x1[idx]) ** 2)) for idx in partition.blocks[:-1]])


def theorem4_bound(L_smooth, dist_sq, ks):
    """``2 (sum sqrt L_i)^2 sum ||x*^i - x1^i||^2 / (k (k+3))`` over the sampled blocks."""
    ks = np.asarray(ks, dtype=float)
    return 2 * np.sqrt(L_smooth).sum() ** 2 * np.sum(dist_sq) / (ks * (ks + 3))


def theorem1_geometric_bound(L_smooth, mu, dist_sq, ks):
    """``(1 - mu / sum L)^(k-1) * (sum L / 2) * ||(I - I^n)(x* - x1)||^2``."""
    sL = float(np.sum(L_smooth))
    ks = np.asarray(ks, dtype=float)
    return (1 - mu / sL) ** (ks - 1) * 0.5 * sL * float(np.sum(dist_sq))


def verify_bound(name, gaps, ks, bound, slack=3.0):
    """Compare the per-``k`` mean of ``gaps`` (repetitions x iterations) with ``bound``."""
    gaps = np.atleast_2d(gaps)
    r = gaps.shape[0]
    mean = gaps.mean(axis=0)
    se = gaps.std(axis=0, ddof=1) / math.sqrt(r) if r > 1 else np.zeros_like(mean)
    return BoundReport(name, np.asarray(ks), mean, se, np.asarray(bound, dtype=float), slack)


def verify_theorem4_bound(gaps, ks, problem, x1):
    """Check mean accelerated gaps against the sqrt-L sampling bound.

    ``gaps[r, j]`` is ``f(y_k) - f*`` at iteration ``ks[j] >= 1``.
    """
    ks = np.asarray(ks)
    if np.any(ks < 1):
        raise ValueError("the bound is stated for k >= 1")
    x_star = problem.optimum()
    L = problem.smoothness_profile().sampled()
    dist_sq = _smooth_block_dist_sq(problem.partition, x_star, x1)
    return verify_bound("accelerated-sqrtL", gaps, ks, theorem4_bound(L, dist_sq, ks))


def verify_theorem1_geometric(gaps, ks, problem, x1):
    """Check mean AR-BCD gaps after ``ks`` iterations against the geometric bound."""
    ks = np.asarray(ks)
    mu = problem.strong_convexity()
    if mu <= 0:
        raise ValueError("geometric bound needs a strongly convex problem")
    x_star = problem.optimum()
    L = problem.smoothness_profile().sampled()
    dist_sq = _smooth_block_dist_sq(problem.partition, x_star, x1)
    return verify_bound("arbcd-geometric", gaps, ks, theorem1_geometric_bound(L, mu, dist_sq, ks))


def bound_report_for(trace, problem, config):
    """Bound check matching ``trace``'s solver, or ``None`` when no bound applies."""
    x1 = starting_point(problem, config.start)
    keep = trace.iterations >= 1
    ks, gaps = trace.iterations[keep], trace.gaps[:, keep]
    has_exact = problem.partition.sizes[-1] > 0
    if trace.solver in ACCELERATED and config.sampling == "sqrt-lip":
        return verify_theorem4_bound(gaps, ks, problem, x1)
    if trace.solver == "arbcd" and config.sampling == "lip" and problem.strong_convexity() > 0:
        if has_exact and np.linalg.norm(problem.block_gradient(x1, problem.partition.exact_block)) > 1e-8:
            return None
        return verify_theorem1_geometric(gaps, ks, problem, x1)
    return None


def fit_rate_exponent(ks, gaps, k_range=None, floor=0.0):
    """Least-squares slope of ``log(gap)`` against ``log(k)``.

    Points outside ``k_range`` are ignored. The range is cut at the first
    gap ``<= floor`` (the numerical floor), with a warning.
    """
    ks = np.asarray(ks, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    sel = ks > 0
    if k_range is not None:
        sel &= (ks >= k_range[0]) & (ks <= k_range[1])
    ks, gaps = ks[sel], gaps[sel]
    low = np.flatnonzero(gaps <= floor)
    if low.size:
        warnings.warn(f"gap reached the floor {floor:g} at k={ks[low[0]]:g}; fit range truncated",
                      RuntimeWarning, stacklevel=2)
        ks, gaps = ks[:low[0]], gaps[:low[0]]
    if ks.size < 2:
        raise ValueError("need at least two positive gaps to fit a rate")
    slope, _ = np.polyfit(np.log(ks), np.log(gaps), 1)
    return float(slope)


def _fmt(v):
    return format(float(v), ".17g")


def write_trace_csv(path, traces, config=None, comments=()):
    """Write traces as ``epoch,solver,median_gap,q25,q75`` with ``#`` comment lines.

    The config is echoed before the header; ``comments`` go after the rows.
    """
    lines = []
    if config is not None:
        for k, v in asdict(config).items():
            if k == "workers":
                continue
            lines.append(f"# {k}={v}")
    lines.append("# partial epochs at the end of a run are dropped")
    lines.append("epoch,solver,median_gap,q25,q75")
    for tr in traces:
        med, lo, hi = tr.median, tr.q25, tr.q75
        for e in range(tr.epochs.size):
            lines.append(f"{int(tr.epochs[e])},{tr.solver},{_fmt(med[e])},{_fmt(lo[e])},{_fmt(hi[e])}")
    lines.extend(f"# {c}" for c in comments)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def default_workers():
    """Worker count from ``BLOCKCD_WORKERS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("BLOCKCD_WORKERS", "1")))
    except ValueError:
        return 1
