"""Problem construction: CSV ingestion and synthetic least-squares instances."""

import csv
import math

import numpy as np

from .blocks import partition_by_sorted_smoothness
from .objective import QuadraticProblem

__all__ = ["CsvError", "load_csv", "synthetic_design", "make_synthetic", "make_quadratic"]


class CsvError(ValueError):
    """Malformed numeric CSV input."""


def load_csv(path, label_col=-1, scale=False, header=False, delimiter=","):
    """Read a numeric CSV into a design matrix and label vector.

    Rows are samples. Column ``label_col`` (negative values count from the
    end) holds the labels; every other column is a feature. With
    ``scale``, the design matrix is divided by its largest absolute entry.
    Cells are reported as ``(row, column)``, both 0-based, counting data
    rows only.

    Returns
    -------
    A : (m, N) ndarray
    b : (m,) ndarray
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter) if r and any(c.strip() for c in r)]
    if header and rows:
        rows = rows[1:]
    if not rows:
        raise CsvError(f"{path}: no data rows")
    width = len(rows[0])
    if width < 2:
        raise CsvError(f"{path}: need a label column and at least one feature column")
    if not -width <= label_col < width:
        raise CsvError(f"{path}: label column {label_col} out of range for {width} columns")
    label_col %= width
    data = np.empty((len(rows), width))
    for r, row in enumerate(rows):
        if len(row) != width:
            raise CsvError(f"{path}: row {r} has {len(row)} columns, expected {width}")
        for c, cell in enumerate(row):
            try:
                data[r, c] = float(cell)
            except ValueError:
                raise CsvError(f"{path}: non-numeric cell {cell.strip()!r} at ({r},{c})") from None
    if not np.all(np.isfinite(data)):
        r, c = np.argwhere(~np.isfinite(data))[0]
        raise CsvError(f"{path}: non-finite cell at ({r},{c})")
    b = data[:, label_col].copy()
    A = np.delete(data, label_col, axis=1)
    if scale:
        amax = np.max(np.abs(A))
        if amax > 0:
            A = A / amax
    return A, b


def synthetic_design(m, n_coords, n_blocks, spread=100.0, profile="geometric", seed=0):
    """Gaussian design with column groups scaled to spread out block smoothness.

    Columns are split into ``n_blocks`` contiguous groups. With
    ``profile="geometric"`` group ``j`` is scaled so its smoothness grows
    like ``spread ** (j / (n_blocks - 1))``; with ``"outlier"`` only the last
    group is scaled, by ``spread``. With ``"correlated"`` the last group
    gets a shared column component sized so its block smoothness is about
    ``spread`` times the largest of the other groups, while its other directions
    stay as flat as the rest. Labels are standard Gaussian.

    Pure column scaling leaves methods that step by ``1 / L_i`` unchanged
    up to a change of variables; the correlated profile is the one where
    exact minimization of the last block genuinely pays off.
    """
    if spread < 1:
        raise ValueError(f"spread must be >= 1, got {spread}")
    if n_blocks < 2 or n_coords < n_blocks:
        raise ValueError(f"need 2 <= n_blocks <= n_coords, got {n_blocks} and {n_coords}")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n_coords)) / math.sqrt(m)
    size = n_coords // n_blocks
    group = np.minimum(np.arange(n_coords) // size, n_blocks - 1)
    if profile == "geometric":
        factor = spread ** (group / (n_blocks - 1))
    elif profile == "outlier":
        factor = np.where(group == n_blocks - 1, spread, 1.0)
    elif profile == "correlated":
        last = group == n_blocks - 1
        base = max(np.linalg.norm(A[:, group == j], 2) ** 2 for j in range(n_blocks - 1))
        g = rng.standard_normal(m)
        g /= np.linalg.norm(g)
        A[:, last] += math.sqrt(spread * base / last.sum()) * g[:, None]
        factor = np.ones(n_coords)
    else:
        raise ValueError(f"unknown profile {profile!r}")
    A *= np.sqrt(factor)
    b = rng.standard_normal(m)
    return A, b


def make_quadratic(A, b, n_blocks=None, block_size=None, lam=0.0, nonsmooth_last=False):
    """Least-squares problem partitioned by sorted coordinate smoothness."""
    A = np.asarray(A, dtype=float)
    coord_L = np.einsum("ij,ij->j", A, A) + lam
    part = partition_by_sorted_smoothness(coord_L, block_size=block_size, n_blocks=n_blocks)
    return QuadraticProblem(A, b, part, lam=lam, nonsmooth_last=nonsmooth_last)


def make_synthetic(m, n_coords, n_blocks, spread=100.0, profile="geometric", lam=0.0, seed=0,
                   nonsmooth_last=False):
    """Synthetic :class:`QuadraticProblem`; see :func:`synthetic_design`."""
    A, b = synthetic_design(m, n_coords, n_blocks, spread, profile, seed)
    return make_quadratic(A, b, n_blocks=n_blocks, lam=lam, nonsmooth_last=nonsmooth_last)
