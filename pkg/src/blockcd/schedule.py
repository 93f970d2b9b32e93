"""Step-weight sequences ``(a_k, A_k)`` and block-sampling distributions.

``A_k`` is always the running sum of the ``a_j``. Three sequence kinds
are provided:

* polynomial: ``a_k = (k+1)/2``, used for the sublinear gap analysis;
* geometric: ``a_k / A_k = mu / sum(L)`` for ``k >= 2``, for strongly
  convex problems;
* constant ratio: ``a_k^2 / A_k = c``, required by the accelerated method.
"""

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ScheduleError",
    "polynomial_sequence",
    "geometric_sequence",
    "constant_ratio_sequence",
    "StepSchedule",
    "PolynomialSchedule",
    "GeometricSchedule",
    "ConstantRatioSchedule",
    "SamplingDistribution",
    "make_sampling",
    "accelerated_parameters",
    "rng_stream",
    "SAMPLING_MODES",
]

SAMPLING_MODES = ("prop-L", "prop-sqrtL", "uniform")


class ScheduleError(ValueError):
    """Invalid schedule or sampling configuration."""


def polynomial_sequence(k):
    """Return ``(a_k, A_k) = ((k+1)/2, k(k+3)/4)``."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return (k + 1) / 2, k * (k + 3) / 4


def geometric_sequence(mu, sum_L, k):
    """Return ``(a_k, A_k)`` with ``a_1 = A_1 = 1`` and ``A_k = A_{k-1} / (1 - mu/sum_L)``."""
    rho = _geometric_ratio(mu, sum_L)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k == 1:
        return 1.0, 1.0
    A_prev = (1 - rho) ** -(k - 2)
    A = A_prev / (1 - rho)
    return A - A_prev, A


def constant_ratio_sequence(c, A_prev):
    """Next ``(a_k, A_k)`` keeping ``a_k^2 / A_k = c``, given ``A_{k-1}`` (0 to start)."""
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    a = 0.5 * (c + math.sqrt(c * c + 4 * c * A_prev))
    return a, A_prev + a


def _geometric_ratio(mu, sum_L):
    if mu <= 0:
        raise ScheduleError("geometric schedule needs mu > 0; use the polynomial schedule")
    if not math.isfinite(sum_L) or sum_L <= 0:
        raise ScheduleError(f"sum_L must be finite and positive, got {sum_L}")
    rho = mu / sum_L
    if rho >= 1:
        raise ScheduleError(f"mu / sum_L = {rho} >= 1 makes A_2 infinite")
    return rho


class StepSchedule:
    """Cursor over ``(a_k, A_k)``; :meth:`advance` moves to ``k+1``.

    Before the first call, ``k == 0`` and ``A == 0``.
    """

    kind = None

    def __init__(self):
        self.k = 0
        self.a = 0.0
        self.A = 0.0

    def _next(self):
        raise NotImplementedError

    def advance(self):
        a, A = self._next()
        self.k += 1
        self.a, self.A = a, A
        return a, A

    def reset(self):
        self.k, self.a, self.A = 0, 0.0, 0.0
        return self

    def take(self, n):
        """Advance ``n`` times and return the arrays ``a`` and ``A``."""
        out = np.array([self.advance() for _ in range(n)])
        return out[:, 0], out[:, 1]


class PolynomialSchedule(StepSchedule):
    kind = "polynomial"

    def _next(self):
        return polynomial_sequence(self.k + 1)


class GeometricSchedule(StepSchedule):
    kind = "geometric"

    def __init__(self, mu, sum_L):
        super().__init__()
        self.rho = _geometric_ratio(mu, sum_L)

    def _next(self):
        if self.k == 0:
            return 1.0, 1.0
        A = self.A / (1 - self.rho)
        return A - self.A, A


class ConstantRatioSchedule(StepSchedule):
    kind = "constant-ratio"

    def __init__(self, c):
        super().__init__()
        if c <= 0:
            raise ScheduleError(f"c must be positive, got {c}")
        self.c = float(c)

    def _next(self):
        return constant_ratio_sequence(self.c, self.A)


@dataclass(frozen=True, eq=False)
class SamplingDistribution:
    """Probabilities over a set of block indices, sampled by inverse CDF."""

    blocks: np.ndarray
    probs: np.ndarray
    cdf: np.ndarray = field(repr=False)

    @classmethod
    def from_weights(cls, blocks, weights):
        blocks = np.asarray(blocks, dtype=int)
        w = np.asarray(weights, dtype=float)
        if blocks.size == 0 or blocks.shape != w.shape:
            raise ScheduleError("need one positive weight per sampled block")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ScheduleError(f"sampling weights must be finite and positive, got {w}")
        p = w / w.sum()
        cdf = np.cumsum(p)
        cdf[-1] = 1.0
        return cls(blocks, p, cdf)

    def __len__(self):
        return self.blocks.size

    def prob_of(self, i):
        """Probability of block ``i`` (0 if it is never sampled)."""
        hit = np.flatnonzero(self.blocks == i)
        return float(self.probs[hit[0]]) if hit.size else 0.0

    def sample(self, rng, size=None):
        """Draw block indices; one uniform variate per draw."""
        u = rng.random(size)
        pos = np.searchsorted(self.cdf, u, side="right")
        pos = np.minimum(pos, self.blocks.size - 1)
        return self.blocks[pos]


def make_sampling(smoothness, mode, include_last=False, sizes=None):
    """Build the block-sampling distribution for one of :data:`SAMPLING_MODES`.

    Parameters
    ----------
    smoothness : sequence of float or SmoothnessProfile
        Per-block smoothness constants ``L_0 .. L_{n-1}``.
    mode : {"prop-L", "prop-sqrtL", "uniform"}
    include_last : bool
        Sample the last block too (plain randomized coordinate descent).
    sizes : sequence of int, optional
        Block sizes; empty blocks are never sampled.

    Raises
    ------
    ScheduleError
        If a sampled block has infinite smoothness.
    """
    L = np.asarray(getattr(smoothness, "per_block_L", smoothness), dtype=float)
    n = L.size
    candidates = np.arange(n if include_last else n - 1)
    if sizes is not None:
        sizes = np.asarray(sizes)
        candidates = candidates[sizes[candidates] > 0]
    Lc = L[candidates]
    bad = candidates[~np.isfinite(Lc)]
    if bad.size:
        raise ScheduleError(f"block {int(bad[0])} has infinite smoothness and cannot be sampled")
    if mode == "prop-L":
        w = Lc
    elif mode == "prop-sqrtL":
        w = np.sqrt(Lc)
    elif mode == "uniform":
        w = np.ones_like(Lc)
    else:
        raise ScheduleError(f"unknown sampling mode {mode!r}; expected one of {SAMPLING_MODES}")
    return SamplingDistribution.from_weights(candidates, w)


def accelerated_parameters(smoothness, mode):
    """Sampling distribution, per-block ``sigma`` and the ratio ``c`` for the accelerated method.

    ``prop-sqrtL`` uses ``sigma_i = (sum sqrt L)^2`` so that ``c = 1``;
    ``uniform`` uses ``sigma_i = L_i`` so that ``c = 1/(n-1)^2``. In both
    cases ``c = min_i sigma_i p_i^2 / L_i``.

    Returns
    -------
    dist : SamplingDistribution
    sigma : ndarray
        One entry per sampled block (aligned with ``dist.blocks``).
    c : float
    """
    L = np.asarray(getattr(smoothness, "per_block_L", smoothness), dtype=float)
    dist = make_sampling(L, mode)
    Ls = L[dist.blocks]
    if mode == "prop-sqrtL":
        sigma = np.full(Ls.size, np.sqrt(Ls).sum() ** 2)
    elif mode == "uniform":
        sigma = Ls.copy()
    else:
        raise ScheduleError(f"accelerated method supports 'prop-sqrtL' or 'uniform' sampling, got {mode!r}")
    c = float(np.min(sigma * dist.probs ** 2 / Ls))
    return dist, sigma, c


def rng_stream(master_seed, rep=0):
    """Independent generator for repetition ``rep`` derived from ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(rep),))
    return np.random.Generator(np.random.PCG64(ss))
