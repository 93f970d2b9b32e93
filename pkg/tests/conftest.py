import numpy as np
import pytest

from blockcd.blocks import make_partition
from blockcd.objective import QuadraticProblem


def contiguous(n_coords, sizes):
    """Partition into consecutive index runs of the given sizes."""
    out, start = [], 0
    for s in sizes:
        out.append(list(range(start, start + s)))
        start += s
    assert start == n_coords
    return make_partition(n_coords, out)


def random_quadratic(seed, m=12, sizes=(3, 3, 4), lam=0.0, rank=None):
    """Random least-squares problem; ``rank`` makes A rank deficient."""
    rng = np.random.default_rng(seed)
    N = sum(sizes)
    A = rng.standard_normal((m, N))
    if rank is not None:
        A = rng.standard_normal((m, rank)) @ rng.standard_normal((rank, N))
    b = rng.standard_normal(m)
    return QuadraticProblem(A, b, contiguous(N, sizes), lam=lam)


@pytest.fixture
def quad3():
    return random_quadratic(0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
