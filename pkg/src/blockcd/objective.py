"""Function oracles: values, block gradients, block smoothness and exact block minimization.

Two oracle kinds are provided.

:class:`QuadraticProblem`
    Least squares / ridge regression ``0.5*||A x - b||^2 + 0.5*lam*||x||^2``
    backed by a precomputed Gram matrix.

:class:`StructuredObjective`
    ``sum_j phi_j((M x)_j) + psi(x)`` with coordinate-separable ``psi``.
    This is the form that admits residual caching, see
    :func:`cached_block_gradient` and :func:`closed_form_exact_min`.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PINV_RTOL",
    "SmoothnessProfile",
    "QuadraticProblem",
    "StructuredObjective",
    "ResidualCache",
    "cached_block_gradient",
    "exact_block_pinv",
    "closed_form_exact_min",
    "solve_block_lstsq",
    "finite_diff_gradient",
    "spectral_norm_sq",
]

# singular values below PINV_RTOL * sigma_max are treated as zero
PINV_RTOL = 1e-12


def spectral_norm_sq(A):
    """Largest eigenvalue of ``A.T @ A`` (0 for an empty matrix)."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2) ** 2)


def _check_vector(x, n):
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"expected vector of length {n}, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class SmoothnessProfile:
    """Per-block smoothness constants and the strong convexity modulus.

    ``per_block_L[-1]`` may be ``math.inf``, meaning the last block is
    treated as non-smooth and can only be minimized exactly.
    """

    per_block_L: tuple
    mu: float = 0.0

    def __post_init__(self):
        L = tuple(float(v) for v in self.per_block_L)
        object.__setattr__(self, "per_block_L", L)
        for i, v in enumerate(L):
            if math.isnan(v) or v <= 0:
                raise ValueError(f"L_{i} must be positive, got {v}")
            if math.isinf(v) and i != len(L) - 1:
                raise ValueError(f"only the last block may have infinite smoothness (block {i})")
        if self.mu < 0:
            raise ValueError(f"mu must be nonnegative, got {self.mu}")
        finite = [v for v in L if math.isfinite(v)]
        if finite and self.mu > min(finite) * (1 + 1e-9):
            raise ValueError(f"mu={self.mu} exceeds the smallest finite L_i={min(finite)}")

    @property
    def n_blocks(self):
        return len(self.per_block_L)

    def sampled(self):
        """Smoothness constants of blocks ``0 .. n-2`` as an array."""
        return np.array(self.per_block_L[:-1], dtype=float)


class _Oracle:
    """Shared helpers; subclasses set ``partition``, ``_L`` and ``_mu``."""

    partition = None
    _L = ()
    _mu = 0.0

    @property
    def n_coords(self):
        return self.partition.n_coords

    def block_smoothness(self, i):
        self.partition.indices(i)
        return self._L[i]

    def strong_convexity(self):
        return self._mu

    def smoothness_profile(self):
        return SmoothnessProfile(tuple(self._L), self._mu)

    def gradient(self, x):
        x = _check_vector(x, self.n_coords)
        g = np.zeros(self.n_coords)
        for i in range(self.partition.n_blocks):
            idx = self.partition.indices(i)
            if idx.size:
                g[idx] = self.block_gradient(x, i)
        return g


class QuadraticProblem(_Oracle):
    """Least squares with optional ridge term.

    Parameters
    ----------
    A : (m, N) array
        Design matrix.
    b : (m,) array
        Labels.
    partition : BlockPartition
        Coordinate blocks.
    lam : float
        Ridge weight, ``>= 0``.
    nonsmooth_last : bool
        Report ``L_n = inf`` for the last block. The function itself is
        unchanged; this only forbids gradient steps on that block.
    """

    def __init__(self, A, b, partition, lam=0.0, nonsmooth_last=False):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[0] != b.size:
            raise ValueError(f"A must be (m, N) with m = len(b); got {A.shape} and {b.size}")
        if A.shape[1] != partition.n_coords:
            raise ValueError(f"A has {A.shape[1]} columns, partition covers {partition.n_coords}")
        if lam < 0:
            raise ValueError(f"lam must be nonnegative, got {lam}")
        self.A, self.b, self.lam = A, b, float(lam)
        self.partition = partition
        N = A.shape[1]
        self.H = A.T @ A + self.lam * np.eye(N)
        self.c = A.T @ b
        self._rows = [self.H[idx] for idx in partition.blocks]
        self._pinv = {}
        L = [spectral_norm_sq(A[:, idx]) + self.lam if idx.size else math.inf
             for idx in partition.blocks]
        if nonsmooth_last:
            L[-1] = math.inf
        self._L = L
        self._mu = max(float(np.linalg.eigvalsh(self.H)[0]), 0.0)
        self._xstar = None

    @property
    def shape(self):
        return self.A.shape

    def coordinate_smoothness(self):
        """Smoothness of each single coordinate, ``||a_j||^2 + lam``."""
        return np.diag(self.H).copy()

    def value(self, x):
        x = _check_vector(x, self.n_coords)
        r = self.A @ x - self.b
        return 0.5 * float(r @ r) + 0.5 * self.lam * float(x @ x)

    def gradient(self, x):
        x = _check_vector(x, self.n_coords)
        return self.H @ x - self.c

    def block_gradient(self, x, i):
        idx = self.partition.indices(i)
        x = _check_vector(x, self.n_coords)
        return self._rows[i] @ x - self.c[idx]

    def block_pinv(self, i):
        """Pseudoinverse of the block Gram matrix ``A_i^T A_i + lam I`` (cached)."""
        P = self._pinv.get(i)
        if P is None:
            idx = self.partition.indices(i)
            P = np.linalg.pinv(self.H[np.ix_(idx, idx)], rcond=PINV_RTOL, hermitian=True)
            self._pinv[i] = P
        return P

    def exact_block_min(self, x, i, out=None):
        """Minimize over block ``i`` with the other blocks of ``x`` held fixed.

        Singular block subproblems get the minimum-norm solution. Writes
        into ``out`` when given, else returns a new vector.
        """
        x = _check_vector(x, self.n_coords)
        idx = self.partition.indices(i)
        y = x.copy() if out is None else out
        if out is not None and out is not x:
            y[:] = x
        if idx.size == 0:
            return y
        Hii = self.H[np.ix_(idx, idx)]
        rhs = self.c[idx] - self._rows[i] @ x + Hii @ x[idx]
        y[idx] = self.block_pinv(i) @ rhs
        return y

    def optimum(self):
        """Minimum-norm minimizer, computed once by a direct least-squares solve."""
        if self._xstar is None:
            A, b = self.A, self.b
            if self.lam > 0:
                N = A.shape[1]
                A = np.vstack([A, math.sqrt(self.lam) * np.eye(N)])
                b = np.concatenate([b, np.zeros(N)])
            self._xstar = np.linalg.lstsq(A, b, rcond=None)[0]
        return self._xstar.copy()

    def suboptimality(self, x):
        """``f(x) - f*`` evaluated as ``0.5 (x - x*)^T H (x - x*)``.

        Identical to ``value(x) - value(x*)`` in exact arithmetic but free
        of the cancellation floor near the optimum.
        """
        d = _check_vector(x, self.n_coords) - self._xstar_cached()
        return 0.5 * float(d @ (self.H @ d))

    def _xstar_cached(self):
        if self._xstar is None:
            self.optimum()
        return self._xstar


class StructuredObjective(_Oracle):
    """``f(x) = sum_j phi_j((M x)_j) + psi(x)``.

    Parameters
    ----------
    M : (m, N) array
        Link matrix.
    partition : BlockPartition
    phi, dphi : callables
        Vectorized over the ``m`` rows: ``phi(t)`` returns the ``m`` values
        ``phi_j(t_j)`` and ``dphi(t)`` their derivatives.
    curvature : float
        Upper bound on every ``phi_j''``; used for the block smoothness.
    psi, psi_grad : callables, optional
        Coordinate-separable term: ``psi(z)`` sums over the given
        coordinates and ``psi_grad(z)`` is elementwise.
    psi_curvature : float
        Upper bound on the curvature of ``psi``.
    mu : float
        Strong convexity modulus (caller-supplied).
    block_L : sequence, optional
        Overrides the computed per-block smoothness constants.
    exact_solver : callable, optional
        ``exact_solver(objective, x, i) -> block values`` for objectives
        that are not least squares.
    """

    def __init__(self, M, partition, phi, dphi, curvature, psi=None, psi_grad=None,
                 psi_curvature=0.0, mu=0.0, block_L=None, exact_solver=None):
        M = np.asarray(M, dtype=float)
        if M.ndim != 2 or M.shape[1] != partition.n_coords:
            raise ValueError(f"M must have {partition.n_coords} columns, got shape {M.shape}")
        self.M = M
        self.partition = partition
        self.phi, self.dphi = phi, dphi
        self.psi = psi if psi is not None else (lambda z: 0.0)
        self.psi_grad = psi_grad if psi_grad is not None else np.zeros_like
        self.exact_solver = exact_solver
        self.labels = None
        self.ridge = None
        self._cols = [M[:, idx] for idx in partition.blocks]
        if block_L is None:
            block_L = [curvature * spectral_norm_sq(Mi) + psi_curvature if Mi.shape[1] else math.inf
                       for Mi in self._cols]
        self._L = [float(v) for v in block_L]
        self._mu = float(mu)
        self._pinv = {}

    @classmethod
    def least_squares(cls, A, b, partition, lam=0.0):
        """``0.5*||A x - b||^2 + 0.5*lam*||x||^2`` in structured form."""
        b = np.asarray(b, dtype=float).reshape(-1)
        lam = float(lam)
        A = np.asarray(A, dtype=float)
        mu = max(float(np.linalg.eigvalsh(A.T @ A)[0]), 0.0) + lam
        obj = cls(
            A, partition,
            phi=lambda t: 0.5 * (t - b) ** 2,
            dphi=lambda t: t - b,
            curvature=1.0,
            psi=lambda z: 0.5 * lam * float(z @ z),
            psi_grad=lambda z: lam * z,
            psi_curvature=lam,
            mu=mu,
        )
        obj.labels, obj.ridge = b, lam
        return obj

    @classmethod
    def from_quadratic(cls, problem):
        obj = cls.least_squares(problem.A, problem.b, problem.partition, problem.lam)
        obj._L = list(problem._L)
        obj._mu = problem.strong_convexity()
        return obj

    @property
    def is_least_squares(self):
        return self.labels is not None

    def column_block(self, i):
        self.partition.indices(i)
        return self._cols[i]

    def value(self, x):
        x = _check_vector(x, self.n_coords)
        return float(np.sum(self.phi(self.M @ x))) + float(self.psi(x))

    def block_gradient(self, x, i):
        idx = self.partition.indices(i)
        x = _check_vector(x, self.n_coords)
        return self._cols[i].T @ self.dphi(self.M @ x) + self.psi_grad(x[idx])

    def block_pinv(self, i):
        """``(M_i^T M_i + lam I)^+`` for least-squares objectives (cached)."""
        if not self.is_least_squares:
            raise ValueError("closed-form block minimization needs a least-squares objective")
        P = self._pinv.get(i)
        if P is None:
            P = exact_block_pinv(self._cols[i], self.ridge)
            self._pinv[i] = P
        return P

    def exact_block_min(self, x, i, out=None):
        x = _check_vector(x, self.n_coords)
        idx = self.partition.indices(i)
        y = x.copy() if out is None else out
        if out is not None and out is not x:
            y[:] = x
        if idx.size == 0:
            return y
        if self.is_least_squares:
            b_prime = self.labels - (self.M @ x - self._cols[i] @ x[idx])
            y[idx] = closed_form_exact_min(self.block_pinv(i), self._cols[i], b_prime)
        elif self.exact_solver is not None:
            y[idx] = self.exact_solver(self, x, i)
        else:
            raise ValueError(f"no exact minimizer available for block {i}")
        return y


@dataclass
class ResidualCache:
    """Products that let block gradients skip forming the full iterate.

    ``r_u = B u``, ``r_v = B v`` (``v`` restricted to the smooth blocks) and
    ``r_n = C x^n``, where ``B`` and ``C`` are the column blocks of ``M``
    for the smooth blocks and the exact block respectively.
    """

    r_u: np.ndarray
    r_v: np.ndarray
    r_n: np.ndarray

    @classmethod
    def zeros(cls, m):
        return cls(np.zeros(m), np.zeros(m), np.zeros(m))


def cached_block_gradient(obj, cache, a, A, i, u_block, v_block):
    """Block-``i`` gradient at ``x = (a/A)^2 u + v`` (plus the exact block) from the caches.

    ``u_block`` and ``v_block`` are block ``i`` of ``u`` and ``v``; they
    are needed only for the separable ``psi`` term.
    """
    ratio = (a / A) ** 2
    z = ratio * cache.r_u + cache.r_v + cache.r_n
    x_block = ratio * np.asarray(u_block) + np.asarray(v_block)
    return obj.column_block(i).T @ obj.dphi(z) + obj.psi_grad(x_block)


def exact_block_pinv(C, lam=0.0):
    """Precompute ``(C^T C + lam I)^+`` for :func:`closed_form_exact_min`."""
    C = np.asarray(C, dtype=float)
    G = C.T @ C + lam * np.eye(C.shape[1])
    return np.linalg.pinv(G, rcond=PINV_RTOL, hermitian=True)


def closed_form_exact_min(pinv, C, b_prime):
    """Ridge minimizer over one block: ``(C^T C + lam I)^+ C^T b'``."""
    return pinv @ (np.asarray(C).T @ np.asarray(b_prime))


def solve_block_lstsq(A, b, lam, partition, x, i):
    """Exact block minimization of a ridge problem via an SVD least-squares solve.

    Independent of the Gram/pseudoinverse route; used as a reference.
    Returns the minimum-norm minimizing block values.
    """
    A = np.asarray(A, dtype=float)
    idx = partition.indices(i)
    Ai = A[:, idx]
    r = np.asarray(b, dtype=float) - (A @ x - Ai @ x[idx])
    if lam > 0:
        Ai = np.vstack([Ai, math.sqrt(lam) * np.eye(idx.size)])
        r = np.concatenate([r, np.zeros(idx.size)])
    # rcond on singular values of Ai matches PINV_RTOL on the squared ones
    return np.linalg.lstsq(Ai, r, rcond=math.sqrt(PINV_RTOL))[0]


def finite_diff_gradient(f, x, h=1e-6):
    """Central-difference gradient of ``f`` (a callable or an oracle with ``value``)."""
    if h <= 0:
        raise ValueError("h must be positive")
    fun = f.value if hasattr(f, "value") else f
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    e = np.zeros_like(x)
    for j in range(x.size):
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2 * h)
        e[j] = 0.0
    return g
