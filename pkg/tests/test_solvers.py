import math

import numpy as np
import pytest

from blockcd.blocks import make_partition
from blockcd.objective import QuadraticProblem, StructuredObjective
from blockcd.schedule import ScheduleError, accelerated_parameters, make_sampling, rng_stream
from blockcd.solvers import (SolverError, gradient_step, run_aarbcd_efficient, run_aarbcd_naive,
                             run_am, run_arbcd, run_cyclic, run_rcdm)

from conftest import contiguous, random_quadratic

UNIT2 = make_partition(2, [[0], [1]])


def reference_accelerated(q, dist, sigma, c, x1, draws):
    """Literal transcription of the accelerated iteration with a Delta accumulator."""
    part = q.partition
    n = part.n_blocks
    p = np.zeros(n)
    s = np.zeros(n)
    p[dist.blocks] = dist.probs
    s[dist.blocks] = sigma
    g_acc = np.zeros(q.n_coords)
    v = x1.copy()
    y = x1.copy()
    A = 0.0
    for i in draws:
        a = 0.5 * (c + math.sqrt(c * c + 4 * c * A))
        A_prev, A = A, A + a
        xh = (A_prev / A) * y + (a / A) * v
        x = q.exact_block_min(xh, n - 1)
        delta = np.zeros(q.n_coords)
        idx = part.blocks[i]
        delta[idx] = q.gradient(x)[idx] / p[i]
        g_acc += a * delta
        v_prev = v
        v = x1.copy()
        for j in dist.blocks:
            jdx = part.blocks[j]
            v[jdx] = x1[jdx] - g_acc[jdx] / s[j]
        y = x.copy()
        y[idx] += (a / (p[i] * A)) * (v[idx] - v_prev[idx])
    return y


def test_gradient_step_examples():
    # f = 0.5 (x1^2 + 4 x2^2)
    q = QuadraticProblem(np.diag([1.0, 2.0]), np.zeros(2), UNIT2)
    x = np.array([2.0, 1.0])
    np.testing.assert_allclose(gradient_step(q, x, 0), [0, 1])
    np.testing.assert_allclose(gradient_step(q, x, 1), [2, 0])
    decrease = q.value(x) - q.value(gradient_step(q, x, 0))
    assert decrease == pytest.approx(2.0)


def test_gradient_step_infinite_L():
    q = QuadraticProblem(np.eye(2), np.zeros(2), UNIT2, nonsmooth_last=True)
    with pytest.raises(SolverError):
        gradient_step(q, np.ones(2), 1)


def test_progress_bound_every_step():
    rng = np.random.default_rng(0)
    for seed in range(8):
        q = random_quadratic(seed, lam=0.2 * (seed % 3), rank=5 if seed % 2 else None)
        for _ in range(25):
            x = rng.standard_normal(q.n_coords) * 3
            i = int(rng.integers(0, 3))
            g = q.block_gradient(x, i)
            fx = q.value(x)
            drop = fx - q.value(gradient_step(q, x, i))
            assert drop >= g @ g / (2 * q.block_smoothness(i)) - 1e-12 * max(1.0, fx)


def test_am_examples():
    q = QuadraticProblem(np.eye(2), [1.0, 2.0], UNIT2)
    res = run_am(q, np.zeros(2), 1)
    np.testing.assert_allclose(res.x, [1, 2])
    q = QuadraticProblem([[1.0, 1.0]], [1.0], UNIT2)
    res = run_am(q, np.zeros(2), 1)
    assert res.x[0] == pytest.approx(1.0)
    assert q.value(res.x) == pytest.approx(0.0)
    with pytest.raises(SolverError):
        run_am(random_quadratic(0), np.zeros(10), 1)


def test_am_monotone():
    q = random_quadratic(3, sizes=(5, 5))
    res = run_am(q, np.zeros(10), 100, record_at=range(101), check_descent=True)
    assert res.diagnostics == []
    assert np.all(np.diff(res.values) <= 1e-12 * max(1.0, res.values[0]))


def test_rcdm_single_block_is_gradient_descent():
    q = random_quadratic(1, sizes=(6, 0))
    dist = make_sampling(q.smoothness_profile(), "uniform", include_last=True, sizes=q.partition.sizes)
    res = run_rcdm(q, dist, np.zeros(6), 20, rng_stream(0))
    x = np.zeros(6)
    L = q.block_smoothness(0)
    for _ in range(20):
        x = x - q.gradient(x) / L
    np.testing.assert_allclose(res.x, x, rtol=1e-12, atol=1e-14)


def test_rcdm_exact_flag_with_empty_last_block():
    q = random_quadratic(2, sizes=(3, 3, 4))
    q = QuadraticProblem(q.A, q.b, q.partition.with_empty_exact_block())
    dist = make_sampling(q.smoothness_profile(), "prop-L", include_last=True, sizes=q.partition.sizes)
    a = run_rcdm(q, dist, np.zeros(10), 200, rng_stream(5), exact_last=True)
    b = run_rcdm(q, dist, np.zeros(10), 200, rng_stream(5), exact_last=False)
    np.testing.assert_array_equal(a.x, b.x)


def test_rcdm_rejects_infinite_L():
    q = QuadraticProblem(np.eye(3), np.ones(3), contiguous(3, (1, 2)), nonsmooth_last=True)
    dist = make_sampling([1.0, 1.0], "uniform", include_last=True)
    with pytest.raises(SolverError):
        run_rcdm(q, dist, np.zeros(3), 5, rng_stream(0))
    # exact steps on the last block are fine
    run_rcdm(q, dist, np.zeros(3), 5, rng_stream(0), exact_last=True)


def test_cyclic_separable_one_sweep():
    A = np.diag([1.0, 2.0, 3.0, 4.0])
    q = QuadraticProblem(A, [1.0, 1.0, 1.0, 1.0], make_partition(4, [[0], [1], [2], [3]]))
    res = run_cyclic(q, np.zeros(4), 4, permutation=[0, 1, 2, 3])
    np.testing.assert_allclose(res.x, q.optimum(), atol=1e-14)


def test_cyclic_fixed_permutation_deterministic():
    q = random_quadratic(4)
    a = run_cyclic(q, np.zeros(10), 60, rng=rng_stream(3), exact_last=True)
    b = run_cyclic(q, np.zeros(10), 60, rng=rng_stream(3), exact_last=True)
    np.testing.assert_array_equal(a.x, b.x)
    perm = a.extra["permutation"]
    assert sorted(perm.tolist()) == [0, 1, 2]
    np.testing.assert_array_equal(a.blocks[:6], np.tile(perm, 2))
    c = run_cyclic(q, np.zeros(10), 60, permutation=perm, exact_last=True)
    np.testing.assert_array_equal(a.x, c.x)


@pytest.mark.parametrize("solver", ["rcdm", "rcdm-g", "cbcd", "cbcd-g", "arbcd", "arbcd-exact"])
def test_monotone_descent(solver):
    for seed in range(5):
        q = random_quadratic(seed, lam=0.1 if seed % 2 else 0.0)
        L = q.smoothness_profile()
        rng = rng_stream(seed)
        x1 = np.random.default_rng(seed).standard_normal(10)
        kw = dict(record_at=range(201), check_descent=True)
        if solver.startswith("rcdm"):
            d = make_sampling(L, "prop-L", include_last=True)
            res = run_rcdm(q, d, x1, 200, rng, exact_last=solver == "rcdm", **kw)
        elif solver.startswith("cbcd"):
            res = run_cyclic(q, x1, 200, rng=rng, exact_last=solver == "cbcd", **kw)
        else:
            inner = "exact" if solver.endswith("exact") else "gradient"
            res = run_arbcd(q, make_sampling(L, "prop-L"), x1, 200, rng, inner=inner, **kw)
        assert res.diagnostics == []
        assert np.all(np.diff(res.values) <= 1e-12 * max(1.0, res.values[0]))


def test_descent_check_reports_increase():
    class Rising:
        partition = UNIT2
        n_coords = 2
        calls = 0

        def value(self, x):
            return float(x.sum())

        def exact_block_min(self, x, i, out=None):
            out[:] = x + 1
            return out

    res = run_am(Rising(), np.zeros(2), 3, check_descent=True)
    assert len(res.diagnostics) == 3
    assert "iteration 1" in res.diagnostics[0]


def test_arbcd_exact_inner_is_am():
    q = random_quadratic(6, sizes=(4, 6))
    x1 = np.random.default_rng(0).standard_normal(10)
    dist = make_sampling(q.smoothness_profile(), "prop-L")
    xs_ar, xs_am = [], []
    run_arbcd(q, dist, x1, 100, rng_stream(0), inner="exact", callback=lambda i: xs_ar.append(i.x.copy()))
    run_am(q, x1, 100, callback=lambda i: xs_am.append(i.x.copy()))
    assert len(xs_ar) == 101
    for a, b in zip(xs_ar, xs_am):
        assert np.linalg.norm(a - b) <= 1e-12 * np.linalg.norm(b)


def test_arbcd_empty_last_block_is_rcdm():
    q = random_quadratic(7)
    q = QuadraticProblem(q.A, q.b, q.partition.with_empty_exact_block())
    prof = q.smoothness_profile()
    d1 = make_sampling(prof, "prop-L", sizes=q.partition.sizes)
    d2 = make_sampling(prof, "prop-L", include_last=True, sizes=q.partition.sizes)
    a = run_arbcd(q, d1, np.zeros(10), 300, rng_stream(9))
    b = run_rcdm(q, d2, np.zeros(10), 300, rng_stream(9))
    np.testing.assert_array_equal(a.blocks, b.blocks)
    np.testing.assert_array_equal(a.x, b.x)


def test_arbcd_rejects_sampling_last_block():
    q = random_quadratic(0)
    dist = make_sampling(q.smoothness_profile(), "uniform", include_last=True)
    with pytest.raises(SolverError):
        run_arbcd(q, dist, np.zeros(10), 1, rng_stream(0))


def test_observation_one_after_every_iteration():
    q = random_quadratic(8, m=15)
    x1 = np.random.default_rng(1).standard_normal(10)
    tol = 1e-8 * (1 + np.linalg.norm(q.gradient(x1)))
    norms = []
    dist = make_sampling(q.smoothness_profile(), "prop-L")
    run_arbcd(q, dist, x1, 200, rng_stream(1),
              callback=lambda info: info.k and norms.append(np.linalg.norm(q.block_gradient(info.x, 2))))
    dist, sigma, c = accelerated_parameters(q.smoothness_profile(), "prop-sqrtL")
    run_aarbcd_naive(q, dist, x1, 200, rng_stream(1), sigma, c,
                     callback=lambda info: info.k and norms.append(np.linalg.norm(q.block_gradient(info.x, 2))))
    assert len(norms) == 400
    assert max(norms) <= tol


@pytest.mark.parametrize("mode", ["prop-sqrtL", "uniform"])
def test_accelerated_matches_reference_transcription(mode):
    q = random_quadratic(10, m=9, lam=0.05)
    dist, sigma, c = accelerated_parameters(q.smoothness_profile(), mode)
    x1 = np.random.default_rng(2).standard_normal(10)
    res = run_aarbcd_naive(q, dist, x1, 300, rng_stream(4), sigma, c)
    ref = reference_accelerated(q, dist, sigma, c, x1, res.blocks)
    np.testing.assert_allclose(res.x, ref, rtol=1e-9, atol=1e-12)


def test_accelerated_first_iteration_seeding():
    q = random_quadratic(11)
    dist, sigma, c = accelerated_parameters(q.smoothness_profile(), "prop-sqrtL")
    x1 = np.ones(10)
    seen = []
    run_aarbcd_naive(q, dist, x1, 1, rng_stream(0), sigma, c,
                     callback=lambda info: seen.append((info.k, info.x.copy(), info.A)))
    # A_0 = 0 so the first extrapolation point is x1, then block n is minimized
    _, x, A = seen[1]
    np.testing.assert_allclose(x, q.exact_block_min(x1, 2))
    assert A == pytest.approx(c)


def test_v_update_arithmetic():
    # sigma = 4, a_1 = 1, p = 1 and Delta = 8: v decreases by 2
    q = QuadraticProblem(np.eye(2), [-8.0, 0.0], UNIT2)
    dist = make_sampling([1.0, 1.0], "uniform")
    res = run_aarbcd_naive(q, dist, np.zeros(2), 1, rng_stream(0), sigma=[4.0], c=1.0)
    assert res.extra["v"][0] == pytest.approx(-2.0)
    res = run_aarbcd_naive(q, dist, np.zeros(2), 1, rng_stream(0), sigma=[4.0])
    assert res.extra["c"] == pytest.approx(4.0)


def test_accelerated_rejects_bad_ratio():
    q = random_quadratic(12)
    dist, sigma, c = accelerated_parameters(q.smoothness_profile(), "prop-sqrtL")
    with pytest.raises(ScheduleError):
        run_aarbcd_naive(q, dist, np.zeros(10), 5, rng_stream(0), sigma, 2 * c)
    with pytest.raises(SolverError):
        run_aarbcd_naive(q, dist, np.zeros(10), 5, rng_stream(0), -sigma, c)


def test_accelerated_empty_exact_block_runs():
    q = random_quadratic(13, m=20)
    q = QuadraticProblem(q.A, q.b, q.partition.with_empty_exact_block())
    dist, sigma, c = accelerated_parameters(q.smoothness_profile(), "uniform")
    assert c == pytest.approx(1 / 9)
    res = run_aarbcd_naive(q, dist, np.zeros(10), 2000, rng_stream(0), sigma, c,
                           record_at=[0, 2000], measure=q.suboptimality)
    assert res.values[-1] < 1e-3 * res.values[0]


def test_efficient_matches_naive():
    q = random_quadratic(14, m=8, sizes=(2, 2, 2), lam=0.0)
    obj = StructuredObjective.from_quadratic(q)
    dist, sigma, c = accelerated_parameters(q.smoothness_profile(), "prop-sqrtL")
    x1 = np.random.default_rng(3).standard_normal(6)
    ks = [0, 1, 7, 100, 500]
    a = run_aarbcd_naive(q, dist, x1, 500, rng_stream(1), sigma, c, record_at=ks)
    b = run_aarbcd_efficient(obj, dist, x1, 500, rng_stream(1), sigma, c, record_at=ks)
    np.testing.assert_array_equal(a.blocks, b.blocks)
    assert np.linalg.norm(a.x - b.x) <= 1e-8 * np.linalg.norm(a.x)
    np.testing.assert_allclose(a.values, b.values, rtol=1e-8)
    sizes = q.partition.sizes
    np.testing.assert_array_equal(b.extra["touched"], sizes[b.blocks] + sizes[-1])


def test_efficient_state_invariants():
    q = random_quadratic(15, m=8, sizes=(2, 2, 2), lam=0.3)
    obj = StructuredObjective.from_quadratic(q)
    dist, sigma, c = accelerated_parameters(q.smoothness_profile(), "uniform")
    res = run_aarbcd_efficient(obj, dist, np.zeros(6), 1000, rng_stream(2), sigma, c)
    naive = run_aarbcd_naive(q, dist, np.zeros(6), 1000, rng_stream(2), sigma, c)
    u, v, cache = res.extra["u"], res.extra["v"], res.extra["cache"]
    sm = q.partition.smooth_indices()
    np.testing.assert_allclose(cache.r_u, q.A[:, sm] @ u[sm], rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(cache.r_v, q.A[:, sm] @ v[sm], rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(v[sm], naive.extra["v"][sm], rtol=1e-8, atol=1e-10)


def test_efficient_requires_least_squares():
    q = random_quadratic(16)
    dist, sigma, c = accelerated_parameters(q.smoothness_profile(), "uniform")
    with pytest.raises(SolverError):
        run_aarbcd_efficient(q, dist, np.zeros(10), 5, rng_stream(0), sigma, c)


class RecordingQuadratic(QuadraticProblem):
    """Keeps every point handed to the exact block minimizer."""

    def __init__(self, q):
        super().__init__(q.A, q.b, q.partition, q.lam)
        self.inputs = []

    def exact_block_min(self, x, i, out=None):
        self.inputs.append(np.array(x, copy=True))
        return super().exact_block_min(x, i, out=out)


def test_extrapolation_point_is_convex_combination():
    q = RecordingQuadratic(random_quadratic(17))
    dist, sigma, c = accelerated_parameters(q.smoothness_profile(), "prop-sqrtL")
    snaps = []
    run_aarbcd_naive(q, dist, np.zeros(10), 200, rng_stream(0), sigma, c,
                     callback=lambda info: snaps.append((info.y.copy(), info.v.copy(), info.a, info.A)))
    assert len(q.inputs) == 200
    for k in range(1, 201):
        y, v, _, _ = snaps[k - 1]
        a, A = snaps[k][2], snaps[k][3]
        w = a / A
        expected = (1 - w) * y + w * v
        np.testing.assert_allclose(q.inputs[k - 1], expected, rtol=1e-13, atol=1e-13)


def test_recording_bounds():
    q = random_quadratic(18)
    with pytest.raises(ValueError):
        run_am(QuadraticProblem(q.A, q.b, contiguous(10, (5, 5))), np.zeros(10), 3, record_at=[5])
    with pytest.raises(ValueError):
        run_rcdm(q, make_sampling(q.smoothness_profile(), "uniform", include_last=True),
                 np.zeros(3), 3, rng_stream(0))
