"""Block coordinate descent solvers.

All solvers take an oracle from :mod:`blockcd.objective`, a starting
point ``x1`` and an iteration budget, and return a :class:`SolverResult`.
Iteration ``k`` of a run is the ``k``-th block update; ``k = 0`` refers
to the starting point.

Randomized solvers draw all block indices up front from the generator
they are given, one uniform variate per iteration, so two solvers using
the same distribution and seed see the same block sequence.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .objective import ResidualCache
from .schedule import ConstantRatioSchedule, ScheduleError

__all__ = [
    "SolverError",
    "SolverResult",
    "IterationInfo",
    "gradient_step",
    "run_am",
    "run_rcdm",
    "run_cyclic",
    "run_arbcd",
    "run_aarbcd_naive",
    "run_aarbcd_efficient",
]

# relative slack for the monotone-descent diagnostic
DESCENT_RTOL = 1e-12


class SolverError(ValueError):
    """Solver configuration incompatible with the problem."""


@dataclass
class IterationInfo:
    """Snapshot passed to per-iteration callbacks.

    Arrays are live views of solver state; copy them to keep them.
    ``y``, ``v`` and the step quantities are only set by the accelerated
    solver.
    """

    k: int
    x: np.ndarray
    block: int = -1
    y: np.ndarray = None
    v: np.ndarray = None
    a: float = 0.0
    A: float = 0.0
    grad_block: np.ndarray = None
    prob: float = 1.0
    v_prev_block: np.ndarray = None


@dataclass
class SolverResult:
    """Outcome of a solver run.

    ``x`` is the solution estimate: the last iterate for the
    non-accelerated methods and ``y_K`` for the accelerated one.
    ``values[j]`` is the measured quantity at iteration ``record_iters[j]``.
    """

    x: np.ndarray
    iterations: int
    record_iters: np.ndarray
    values: np.ndarray
    blocks: np.ndarray
    diagnostics: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


class _Recorder:
    def __init__(self, oracle, iters, record_at, measure):
        self.measure = measure if measure is not None else oracle.value
        if record_at is None:
            record_at = (0, iters)
        r = np.unique(np.asarray(list(record_at), dtype=int))
        if r.size and (r[0] < 0 or r[-1] > iters):
            raise ValueError(f"record iterations must lie in [0, {iters}]")
        self.iters = r
        self.values = np.empty(r.size)
        self._pos = 0

    def wants(self, k):
        return self._pos < self.iters.size and self.iters[self._pos] == k

    def record(self, x):
        self.values[self._pos] = self.measure(x)
        self._pos += 1

    def maybe(self, k, x):
        if self.wants(k):
            self.record(x)


class _DescentCheck:
    def __init__(self, oracle, enabled, x):
        self.oracle = oracle
        self.enabled = enabled
        self.messages = []
        self.prev = oracle.value(x) if enabled else None

    def step(self, k, x):
        if not self.enabled:
            return
        f = self.oracle.value(x)
        if f > self.prev + DESCENT_RTOL * max(1.0, abs(self.prev)):
            self.messages.append(f"iteration {k}: f increased from {self.prev!r} to {f!r}")
        self.prev = f


def _start(oracle, x1):
    x = np.array(x1, dtype=float, copy=True)
    if x.shape != (oracle.n_coords,):
        raise ValueError(f"x1 must have length {oracle.n_coords}, got shape {x.shape}")
    return x


def _step_size(oracle, i):
    L = oracle.block_smoothness(i)
    if not math.isfinite(L):
        raise SolverError(f"block {i} has infinite smoothness; no gradient step possible")
    return 1.0 / L


def _draw(dist, rng, iters):
    if rng is None:
        raise ValueError("randomized solver needs a numpy Generator")
    return dist.sample(rng, iters) if iters else np.empty(0, dtype=int)


def gradient_step(oracle, x, i, out=None):
    """Euclidean gradient step on block ``i``: ``x^i - grad_i f(x) / L_i``.

    Returns a new vector unless ``out`` is given (it may be ``x``).
    """
    t = _step_size(oracle, i)
    idx = oracle.partition.indices(i)
    g = oracle.block_gradient(x, i)
    y = np.array(x, dtype=float, copy=True) if out is None else out
    if out is not None and out is not x:
        y[:] = x
    y[idx] -= t * g
    return y


def run_am(oracle, x1, iters, record_at=None, measure=None, callback=None, check_descent=False):
    """Alternating minimization over two blocks.

    Each iteration minimizes exactly over block 0, then over block 1.
    """
    if oracle.partition.n_blocks != 2:
        raise SolverError(f"alternating minimization needs exactly 2 blocks, got {oracle.partition.n_blocks}")
    x = _start(oracle, x1)
    rec = _Recorder(oracle, iters, record_at, measure)
    desc = _DescentCheck(oracle, check_descent, x)
    rec.maybe(0, x)
    if callback is not None:
        callback(IterationInfo(0, x))
    for k in range(1, iters + 1):
        oracle.exact_block_min(x, 0, out=x)
        oracle.exact_block_min(x, 1, out=x)
        desc.step(k, x)
        rec.maybe(k, x)
        if callback is not None:
            callback(IterationInfo(k, x, block=0))
    return SolverResult(x, iters, rec.iters, rec.values, np.zeros(iters, dtype=int), desc.messages)


def run_rcdm(oracle, dist, x1, iters, rng, exact_last=False, record_at=None, measure=None,
             callback=None, check_descent=False):
    """Randomized block coordinate descent.

    Each iteration samples a block from ``dist`` and takes a gradient step
    on it. With ``exact_last``, landing on the last block minimizes over it
    exactly instead (the variant with exact minimization on the least
    smooth block); without it every sampled block must have finite
    smoothness.
    """
    n_last = oracle.partition.exact_block
    for i in dist.blocks:
        if not (exact_last and i == n_last):
            _step_size(oracle, int(i))
    x = _start(oracle, x1)
    draws = _draw(dist, rng, iters)
    rec = _Recorder(oracle, iters, record_at, measure)
    desc = _DescentCheck(oracle, check_descent, x)
    rec.maybe(0, x)
    if callback is not None:
        callback(IterationInfo(0, x))
    for k in range(1, iters + 1):
        i = int(draws[k - 1])
        if exact_last and i == n_last:
            oracle.exact_block_min(x, i, out=x)
        else:
            gradient_step(oracle, x, i, out=x)
        desc.step(k, x)
        rec.maybe(k, x)
        if callback is not None:
            callback(IterationInfo(k, x, block=i))
    return SolverResult(x, iters, rec.iters, rec.values, draws, desc.messages)


def run_cyclic(oracle, x1, iters, permutation=None, rng=None, exact_last=False, record_at=None,
               measure=None, callback=None, check_descent=False):
    """Cyclic block coordinate descent over a fixed block order.

    The order is ``permutation`` if given, otherwise a random permutation
    of the non-empty blocks drawn once from ``rng``. Each iteration
    updates one block; with ``exact_last`` the last block is minimized
    exactly at its turn.
    """
    part = oracle.partition
    n_last = part.exact_block
    if permutation is None:
        nonempty = np.flatnonzero(part.sizes > 0)
        if rng is None:
            raise ValueError("give a permutation or a Generator to draw one")
        permutation = rng.permutation(nonempty)
    permutation = np.asarray(permutation, dtype=int)
    for i in permutation:
        part.indices(int(i))
        if not (exact_last and i == n_last):
            _step_size(oracle, int(i))
    x = _start(oracle, x1)
    rec = _Recorder(oracle, iters, record_at, measure)
    desc = _DescentCheck(oracle, check_descent, x)
    rec.maybe(0, x)
    if callback is not None:
        callback(IterationInfo(0, x))
    seq = np.resize(permutation, iters)
    for k in range(1, iters + 1):
        i = int(seq[k - 1])
        if exact_last and i == n_last:
            oracle.exact_block_min(x, i, out=x)
        else:
            gradient_step(oracle, x, i, out=x)
        desc.step(k, x)
        rec.maybe(k, x)
        if callback is not None:
            callback(IterationInfo(k, x, block=i))
    result = SolverResult(x, iters, rec.iters, rec.values, seq, desc.messages)
    result.extra["permutation"] = permutation
    return result


def run_arbcd(oracle, dist, x1, iters, rng, inner="gradient", record_at=None, measure=None,
              callback=None, check_descent=False):
    """Alternating randomized block coordinate descent.

    Each iteration samples ``i`` from ``dist`` (which must exclude the last
    block), updates block ``i`` by a gradient step (``inner="gradient"``)
    or exact minimization (``inner="exact"``), then minimizes exactly over
    the last block.
    """
    n_last = oracle.partition.exact_block
    if n_last in set(dist.blocks.tolist()):
        raise SolverError("the exactly minimized block must not be sampled")
    if inner not in ("gradient", "exact"):
        raise ValueError(f"inner must be 'gradient' or 'exact', got {inner!r}")
    if inner == "gradient":
        for i in dist.blocks:
            _step_size(oracle, int(i))
    x = _start(oracle, x1)
    draws = _draw(dist, rng, iters)
    rec = _Recorder(oracle, iters, record_at, measure)
    desc = _DescentCheck(oracle, check_descent, x)
    rec.maybe(0, x)
    if callback is not None:
        callback(IterationInfo(0, x))
    for k in range(1, iters + 1):
        i = int(draws[k - 1])
        if inner == "gradient":
            gradient_step(oracle, x, i, out=x)
        else:
            oracle.exact_block_min(x, i, out=x)
        oracle.exact_block_min(x, n_last, out=x)
        desc.step(k, x)
        rec.maybe(k, x)
        if callback is not None:
            callback(IterationInfo(k, x, block=i))
    return SolverResult(x, iters, rec.iters, rec.values, draws, desc.messages)


def _accelerated_setup(oracle, dist, sigma, c):
    part = oracle.partition
    n_last = part.exact_block
    if n_last in set(dist.blocks.tolist()):
        raise SolverError("the exactly minimized block must not be sampled")
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), dist.blocks.shape)
    if np.any(sigma <= 0):
        raise SolverError("sigma must be positive")
    L = np.array([oracle.block_smoothness(int(i)) for i in dist.blocks])
    if not np.all(np.isfinite(L)):
        raise SolverError("sampled blocks must have finite smoothness")
    limit = float(np.min(sigma * dist.probs ** 2 / L))
    if c is None:
        c = limit
    if isinstance(c, ConstantRatioSchedule):
        schedule = c.reset()
    else:
        schedule = ConstantRatioSchedule(float(c))
    if schedule.c > limit * (1 + 1e-12):
        raise ScheduleError(
            f"a_k^2/A_k = {schedule.c} exceeds min_i sigma_i p_i^2 / L_i = {limit}")
    p_full = np.zeros(part.n_blocks)
    s_full = np.zeros(part.n_blocks)
    p_full[dist.blocks] = dist.probs
    s_full[dist.blocks] = sigma
    return schedule, p_full, s_full


def run_aarbcd_naive(oracle, dist, x1, iters, rng, sigma, c=None, record_at=None, measure=None,
                     callback=None):
    """Accelerated alternating randomized block coordinate descent, full-vector form.

    Parameters
    ----------
    dist : SamplingDistribution
        Over blocks ``0 .. n-2``.
    sigma : float or array
        Per-sampled-block regularization weights (aligned with ``dist.blocks``).
    c : float or ConstantRatioSchedule, optional
        The constant ``a_k^2 / A_k``; defaults to ``min_i sigma_i p_i^2 / L_i``
        and may not exceed it.

    The iteration is seeded with ``v_0 = y_0 = x1`` and ``A_0 = 0``, so the
    first extrapolation point is ``x1`` itself. The returned ``x`` and the
    recorded values refer to ``y_k``.
    """
    schedule, p_full, s_full = _accelerated_setup(oracle, dist, sigma, c)
    part = oracle.partition
    n_last = part.exact_block
    v = _start(oracle, x1)
    y = v.copy()
    x = v.copy()
    draws = _draw(dist, rng, iters)
    rec = _Recorder(oracle, iters, record_at, measure)
    rec.maybe(0, y)
    if callback is not None:
        callback(IterationInfo(0, x, y=y, v=v))
    for k in range(1, iters + 1):
        i = int(draws[k - 1])
        a, A = schedule.advance()
        # x_hat = (1 - w) y + w v with w = a/A, so the weights sum to one exactly
        np.subtract(v, y, out=x)
        x *= a / A
        x += y
        oracle.exact_block_min(x, n_last, out=x)
        idx = part.blocks[i]
        g = oracle.block_gradient(x, i)
        p = p_full[i]
        v_prev = v[idx].copy()
        v[idx] = v_prev - (a / (p * s_full[i])) * g
        y[:] = x
        y[idx] += (a / (p * A)) * (v[idx] - v_prev)
        rec.maybe(k, y)
        if callback is not None:
            callback(IterationInfo(k, x, block=i, y=y, v=v, a=a, A=A, grad_block=g, prob=p,
                                   v_prev_block=v_prev))
    result = SolverResult(y, iters, rec.iters, rec.values, draws)
    result.extra["v"] = v
    result.extra["x"] = x
    result.extra["c"] = schedule.c
    return result


def run_aarbcd_efficient(obj, dist, x1, iters, rng, sigma, c=None, record_at=None, measure=None):
    """Accelerated method without full-vector updates.

    Keeps ``u_k = (A_k/a_k)^2 (y_k - v_k)`` and ``v_k`` on the smooth blocks
    together with the residual products ``B u``, ``B v`` and ``C x^n``, so
    an iteration touches only the sampled block, the exact block and
    ``m``-vectors. ``y`` is assembled only at recorded iterations and at
    the end.

    ``obj`` must be a least-squares :class:`~blockcd.objective.StructuredObjective`
    (the exact block is minimized in closed form). Same arguments and
    block sequence as :func:`run_aarbcd_naive`.

    ``result.extra["touched"]`` holds the number of coordinates of ``x``
    written in each iteration.
    """
    if not getattr(obj, "is_least_squares", False):
        raise SolverError("efficient accelerated solver needs a least-squares StructuredObjective")
    schedule, p_full, s_full = _accelerated_setup(obj, dist, sigma, c)
    cst = schedule.c
    part = obj.partition
    n_last = part.exact_block
    last_idx = part.blocks[n_last]
    C = obj.column_block(n_last)
    P = obj.block_pinv(n_last) if last_idx.size else None
    cols = [obj.column_block(i) for i in range(part.n_blocks)]

    x1 = _start(obj, x1)
    v = x1.copy()
    u = np.zeros(obj.n_coords)
    x_last = x1[last_idx].copy()
    m = obj.M.shape[0]
    cache = ResidualCache.zeros(m)
    smooth = part.smooth_indices()
    if smooth.size:
        cache.r_v = obj.M[:, smooth] @ x1[smooth]
    b = obj.labels
    touched = np.zeros(iters, dtype=int)

    def assemble(ratio):
        y = ratio * u + v
        y[last_idx] = x_last
        return y

    draws = _draw(dist, rng, iters)
    rec = _Recorder(obj, iters, record_at, measure)
    rec.maybe(0, x1)
    ratio = 0.0
    for k in range(1, iters + 1):
        i = int(draws[k - 1])
        a, A = schedule.advance()
        ratio = cst / A  # (a_k / A_k)^2
        if last_idx.size:
            b_prime = b - ratio * cache.r_u - cache.r_v
            x_last = P @ (C.T @ b_prime)
            cache.r_n = C @ x_last
        idx = part.blocks[i]
        Mi = cols[i]
        z = ratio * cache.r_u + cache.r_v + cache.r_n
        g = Mi.T @ obj.dphi(z) + obj.psi_grad(ratio * u[idx] + v[idx])
        p = p_full[i]
        dv = -(a / (p * s_full[i])) * g
        du = -(A / a) ** 2 * (1 - a / (p * A)) * dv
        v[idx] += dv
        u[idx] += du
        cache.r_v += Mi @ dv
        cache.r_u += Mi @ du
        touched[k - 1] = idx.size + last_idx.size
        if rec.wants(k):
            rec.record(assemble(ratio))
    y = assemble(ratio) if iters else x1
    result = SolverResult(y, iters, rec.iters, rec.values, draws)
    result.extra.update(touched=touched, u=u, v=v, cache=cache, c=cst)
    return result
