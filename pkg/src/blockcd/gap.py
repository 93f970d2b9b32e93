"""Approximate duality gap monitors.

:class:`GapAccumulator` keeps the convexity lower bound

    L_k(u) = [sum_j a_j f(x_j) + sum_j a_j <grad f(x_j), u - x_j>
              + (mu/2) sum_j a_j ||u - x_j||^2] / A_k

as a quadratic form in the query point ``u``, so it can be evaluated at
``x*`` without storing the iterates. :class:`RandGapAccumulator` keeps
the randomized bound ``Lambda_k`` used by the accelerated method.

Both need the full gradient or ``O(N)`` work per iteration, so they are
meant for verification runs only. :class:`ARBCDGapMonitor` and
:class:`AcceleratedGapMonitor` wire them to solver callbacks.
"""

import numpy as np

__all__ = [
    "GapAccumulator",
    "RandGapAccumulator",
    "lower_bound_Lk",
    "gap_Gk",
    "lambda_k",
    "gamma_k",
    "ARBCDGapMonitor",
    "AcceleratedGapMonitor",
]


class GapAccumulator:
    """Running sums defining the deterministic lower bound ``L_k``."""

    def __init__(self, n_coords, mu=0.0):
        self.mu = float(mu)
        self.A = 0.0
        self.k = 0
        self.sum_af = 0.0
        self.g = np.zeros(n_coords)       # sum a_j grad f(x_j)
        self.offset = 0.0                 # sum a_j <grad f(x_j), x_j>
        self.wx = np.zeros(n_coords)      # sum a_j x_j
        self.sq = 0.0                     # sum a_j ||x_j||^2

    def record(self, a, fx, grad, x):
        self.k += 1
        self.A += a
        self.sum_af += a * fx
        self.g += a * grad
        self.offset += a * float(grad @ x)
        if self.mu:
            self.wx += a * x
            self.sq += a * float(x @ x)

    def linear_form(self, u):
        """``sum_j a_j <grad f(x_j), u - x_j>``."""
        return float(self.g @ u) - self.offset

    def lower_bound(self, u):
        if self.k == 0:
            raise ValueError("no iterates recorded")
        total = self.sum_af + self.linear_form(u)
        if self.mu:
            total += 0.5 * self.mu * (self.A * float(u @ u) - 2 * float(self.wx @ u) + self.sq)
        return total / self.A


def lower_bound_Lk(acc, x_star):
    """``L_k`` evaluated at ``x_star``; never exceeds ``f(x_star)`` up to round-off."""
    return acc.lower_bound(np.asarray(x_star, dtype=float))


def gap_Gk(acc, f_upper, x_star):
    """``G_k = U_k - L_k`` with ``U_k = f(x_{k+1})`` supplied by the caller."""
    return float(f_upper) - lower_bound_Lk(acc, x_star)


class RandGapAccumulator:
    """State of the randomized lower bound ``Lambda_k``.

    Tracks ``g_k = sum_j a_j Delta_j`` on the sampled blocks, the scalar
    ``s_k = sum_j a_j <Delta_j, x_j>``, and the model minimum
    ``min_u m_k(u) = m_k(v_k)`` updated incrementally.

    Parameters
    ----------
    partition : BlockPartition
    sigma : array, one entry per block
        Zero for blocks that are never sampled (the exact block).
    x1 : array
        The anchor point of the model.
    """

    def __init__(self, partition, sigma, x1):
        self.partition = partition
        self.sigma = np.asarray(sigma, dtype=float)
        self.x1 = np.array(x1, dtype=float, copy=True)
        self.A = 0.0
        self.k = 0
        self.sum_af = 0.0
        self.g = np.zeros(partition.n_coords)
        self.s = 0.0
        self.model_min = 0.0

    def record(self, a, fx, i, delta_block, x_block, v_prev_block, v_block):
        """Add iteration ``k``: sampled block ``i``, ``Delta_k`` and ``v`` on that block."""
        idx = self.partition.blocks[i]
        self.k += 1
        self.A += a
        self.sum_af += a * fx
        self.g[idx] += a * delta_block
        self.s += a * float(delta_block @ x_block)
        dv = v_block - v_prev_block
        self.model_min += a * float(delta_block @ (v_block - x_block)) + 0.5 * self.sigma[i] * float(dv @ dv)

    def model_min_direct(self):
        """``min_u m_k(u)`` recomputed from ``g_k`` and ``s_k``."""
        total = -self.s
        for i, idx in enumerate(self.partition.blocks):
            if self.sigma[i] > 0 and idx.size:
                gi = self.g[idx]
                total += float(gi @ self.x1[idx]) - float(gi @ gi) / (2 * self.sigma[i])
        return total

    def model_minimizer(self):
        """``v_k = x1 - g_k / sigma`` on sampled blocks, ``x1`` elsewhere."""
        v = self.x1.copy()
        for i, idx in enumerate(self.partition.blocks):
            if self.sigma[i] > 0:
                v[idx] -= self.g[idx] / self.sigma[i]
        return v

    def penalty(self, x_star):
        """``sum_i (sigma_i/2) ||x*^i - x1^i||^2`` over the sampled blocks."""
        total = 0.0
        for i, idx in enumerate(self.partition.blocks):
            if self.sigma[i] > 0:
                d = x_star[idx] - self.x1[idx]
                total += 0.5 * self.sigma[i] * float(d @ d)
        return total


def lambda_k(racc, x_star):
    """Randomized lower bound ``Lambda_k``; bounds ``f(x*)`` only in expectation."""
    if racc.k == 0:
        raise ValueError("no iterates recorded")
    x_star = np.asarray(x_star, dtype=float)
    return (racc.sum_af + racc.model_min - racc.penalty(x_star)) / racc.A


def gamma_k(racc, f_y, x_star):
    """``Gamma_k = f(y_k) - Lambda_k``."""
    return float(f_y) - lambda_k(racc, x_star)


class ARBCDGapMonitor:
    """Solver callback tracking ``L_k`` and ``G_k`` for a basic method.

    Pass an instance as ``callback`` to :func:`~blockcd.solvers.run_arbcd`
    (or any non-accelerated solver). The starting point is ``x_1``; once
    ``x_{k+1}`` arrives, ``G_k = f(x_{k+1}) - L_k`` is logged.

    Attributes ``ks``, ``lower``, ``upper`` and ``gaps`` are lists indexed
    by log entry.
    """

    def __init__(self, oracle, schedule, x_star, mu=None):
        self.oracle = oracle
        self.schedule = schedule.reset()
        self.x_star = np.asarray(x_star, dtype=float)
        mu = oracle.strong_convexity() if mu is None else mu
        self.acc = GapAccumulator(oracle.n_coords, mu)
        self.ks, self.lower, self.upper, self.gaps = [], [], [], []

    def __call__(self, info):
        fx = self.oracle.value(info.x)
        if self.acc.k:
            L = lower_bound_Lk(self.acc, self.x_star)
            self.ks.append(self.acc.k)
            self.lower.append(L)
            self.upper.append(fx)
            self.gaps.append(fx - L)
        a, _ = self.schedule.advance()
        self.acc.record(a, fx, self.oracle.gradient(info.x), info.x)


class AcceleratedGapMonitor:
    """Solver callback tracking ``Lambda_k`` and ``Gamma_k`` for the accelerated method.

    Pass an instance as ``callback`` to
    :func:`~blockcd.solvers.run_aarbcd_naive`. ``sigma`` is aligned with
    the sampling distribution's blocks, as for the solver.
    """

    def __init__(self, oracle, dist, sigma, x1, x_star):
        part = oracle.partition
        s_full = np.zeros(part.n_blocks)
        s_full[dist.blocks] = np.broadcast_to(np.asarray(sigma, dtype=float), dist.blocks.shape)
        self.oracle = oracle
        self.racc = RandGapAccumulator(part, s_full, x1)
        self.x_star = np.asarray(x_star, dtype=float)
        self.ks, self.A, self.lambdas, self.gammas, self.f_y = [], [], [], [], []

    def __call__(self, info):
        if info.k == 0:
            return
        idx = self.oracle.partition.blocks[info.block]
        delta = info.grad_block / info.prob
        self.racc.record(info.a, self.oracle.value(info.x), info.block, delta, info.x[idx],
                         info.v_prev_block, info.v[idx])
        fy = self.oracle.value(info.y)
        lam = lambda_k(self.racc, self.x_star)
        self.ks.append(info.k)
        self.A.append(info.A)
        self.lambdas.append(lam)
        self.gammas.append(fy - lam)
        self.f_y.append(fy)
