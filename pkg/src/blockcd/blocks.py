"""Coordinate-block partitions and block-restricted vector arithmetic.

Vectors are plain 1-d numpy arrays of length ``n_coords``; a
:class:`BlockPartition` says which coordinates belong to which block.
The last block is always the one that solvers minimize exactly.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BlockPartition",
    "PartitionError",
    "make_partition",
    "partition_by_sorted_smoothness",
    "block_restrict",
    "block_scatter",
    "block_norm_sq",
]


class PartitionError(ValueError):
    """Raised when index sets do not form a valid block partition."""


@dataclass(frozen=True, eq=False)
class BlockPartition:
    """Disjoint, covering assignment of ``n_coords`` indices to ordered blocks.

    Use :func:`make_partition` to build one; the constructor does not
    validate.
    """

    n_coords: int
    blocks: tuple

    @property
    def n_blocks(self):
        return len(self.blocks)

    @property
    def exact_block(self):
        """Index of the exactly-minimized block (always the last one)."""
        return len(self.blocks) - 1

    @property
    def sizes(self):
        return np.array([len(b) for b in self.blocks], dtype=int)

    def indices(self, i):
        if not 0 <= i < len(self.blocks):
            raise IndexError(f"block index {i} out of range [0, {len(self.blocks)})")
        return self.blocks[i]

    def smooth_indices(self):
        """Coordinates of blocks ``0 .. n-2`` (everything except the exact block)."""
        if len(self.blocks) == 1:
            return np.empty(0, dtype=int)
        return np.concatenate(self.blocks[:-1])

    def mask(self, i):
        m = np.zeros(self.n_coords, dtype=bool)
        m[self.indices(i)] = True
        return m

    def block_of(self):
        """Array mapping each coordinate to its block index."""
        owner = np.empty(self.n_coords, dtype=int)
        for i, b in enumerate(self.blocks):
            owner[b] = i
        return owner

    def with_empty_exact_block(self):
        """Same blocks plus an empty trailing block, so nothing is minimized exactly."""
        return BlockPartition(self.n_coords, self.blocks + (np.empty(0, dtype=int),))

    def __eq__(self, other):
        if not isinstance(other, BlockPartition):
            return NotImplemented
        return self.n_coords == other.n_coords and len(self.blocks) == len(
            other.blocks
        ) and all(np.array_equal(a, b) for a, b in zip(self.blocks, other.blocks))

    def __hash__(self):
        return hash((self.n_coords, tuple(tuple(b.tolist()) for b in self.blocks)))

    def __repr__(self):
        return f"BlockPartition(n_coords={self.n_coords}, blocks={[b.tolist() for b in self.blocks]})"


def make_partition(n_coords, block_index_sets):
    """Validate index sets and build a :class:`BlockPartition`.

    Every coordinate in ``[0, n_coords)`` must appear in exactly one set.
    All blocks must be non-empty except the last, which may be empty.

    Raises
    ------
    PartitionError
        On overlap, an unassigned coordinate, an out-of-range index, an
        empty non-final block, or fewer than two blocks.
    """
    n_coords = int(n_coords)
    if n_coords <= 0:
        raise PartitionError(f"n_coords must be positive, got {n_coords}")
    sets = [np.asarray(list(s), dtype=int).reshape(-1) for s in block_index_sets]
    if len(sets) < 2:
        raise PartitionError(f"need at least 2 blocks, got {len(sets)}")
    owner = np.full(n_coords, -1, dtype=int)
    for i, s in enumerate(sets):
        if s.size == 0 and i != len(sets) - 1:
            raise PartitionError(f"block {i} is empty; only the last block may be empty")
        for c in s:
            c = int(c)
            if not 0 <= c < n_coords:
                raise PartitionError(f"coordinate {c} out of range [0, {n_coords})")
            if owner[c] >= 0:
                raise PartitionError(f"coordinate {c} in two blocks ({owner[c]} and {i})")
            owner[c] = i
    missing = np.flatnonzero(owner < 0)
    if missing.size:
        raise PartitionError(f"coordinate {int(missing[0])} unassigned")
    blocks = []
    for s in sets:
        b = s.copy()
        b.setflags(write=False)
        blocks.append(b)
    return BlockPartition(n_coords, tuple(blocks))


def partition_by_sorted_smoothness(coord_smoothness, block_size=None, n_blocks=None):
    """Group coordinates into blocks of consecutive ascending smoothness.

    Coordinates are stably sorted by their individual smoothness
    parameters; the first ``block_size`` go to block 0, the next to block
    1, and so on, so the last block holds the least smooth coordinates.
    When the size does not divide evenly, the last block absorbs the
    remainder.

    Exactly one of ``block_size`` or ``n_blocks`` must be given.
    """
    L = np.asarray(coord_smoothness, dtype=float).reshape(-1)
    N = L.size
    if (block_size is None) == (n_blocks is None):
        raise ValueError("give exactly one of block_size or n_blocks")
    if n_blocks is None:
        block_size = int(block_size)
        if block_size <= 0:
            raise ValueError(f"block_size must be positive, got {block_size}")
        n_blocks = max(N // block_size, 1)
    else:
        n_blocks = int(n_blocks)
        if n_blocks <= 0:
            raise ValueError(f"n_blocks must be positive, got {n_blocks}")
        block_size = N // n_blocks
        if block_size == 0:
            raise ValueError(f"cannot split {N} coordinates into {n_blocks} blocks")
    order = np.argsort(L, kind="stable")
    sets = [order[j * block_size:(j + 1) * block_size] for j in range(n_blocks - 1)]
    sets.append(order[(n_blocks - 1) * block_size:])
    return make_partition(N, sets)


def block_restrict(partition, x, i):
    """Return a copy of the block-``i`` entries of ``x``."""
    x = np.asarray(x)
    if x.shape != (partition.n_coords,):
        raise ValueError(f"expected vector of length {partition.n_coords}, got shape {x.shape}")
    return x[partition.indices(i)]


def block_scatter(partition, x, i, values):
    """Write ``values`` into block ``i`` of ``x`` in place and return ``x``."""
    idx = partition.indices(i)
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size != idx.size:
        raise ValueError(f"block {i} has {idx.size} coordinates, got {values.size} values")
    x[idx] = values
    return x


def block_norm_sq(partition, x, i):
    """Squared Euclidean norm of block ``i`` of ``x``."""
    xi = np.asarray(x, dtype=float)[partition.indices(i)]
    return float(xi @ xi)
