import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sinkdiff import (
    KernelUnderflowError,
    TransportInstance,
    ValidationError,
    center,
    contraction_ratio,
    gibbs_kernel,
    hilbert_distance,
    plan,
    solve,
    step,
    step_lse,
    variation_seminorm,
)
from sinkdiff import kernels
from sinkdiff.sinkhorn import marginal_violation

from conftest import constant_cost_instance, random_instance


def brute_force_theta(K):
    n, m = K.shape
    return max(
        K[i, k] * K[j, l] / (K[j, k] * K[i, l])
        for i, j in itertools.product(range(n), repeat=2)
        for k, l in itertools.product(range(m), repeat=2)
    )


class TestKernels:
    def test_backends_agree(self, rng):
        inst = random_instance(rng, 7, 5)
        lk = inst.log_kernel
        la, lb = np.log(inst.a), np.log(inst.b)
        x = rng.normal(size=7) * 3
        py = kernels.get_backend("python")
        for name in kernels.available_backends():
            impl = kernels.get_backend(name)
            np.testing.assert_allclose(
                kernels.lse_step(lk, la, lb, x, backend=name), py.lse_step(lk, la, lb, x), atol=1e-13
            )
            np.testing.assert_allclose(
                kernels.lse_log_plan(lk, lb, x, backend=name), py.lse_log_plan(lk, lb, x), atol=1e-13
            )
            assert kernels.max_log_cross_ratio(lk, backend=name) == pytest.approx(
                py.max_log_cross_ratio(lk), abs=1e-13
            )
            assert impl is not None

    def test_cross_ratio_against_row_difference_form(self, rng, backend):
        # max over quadruples == max over row pairs of the spread of L_i - L_j
        L = rng.normal(size=(6, 4))
        shortcut = max(np.ptp(L[i] - L[j]) for i in range(6) for j in range(6))
        assert kernels.max_log_cross_ratio(L, backend=backend) == pytest.approx(shortcut, abs=1e-13)


class TestGibbsKernel:
    def test_zero_cost(self):
        inst = TransportInstance(np.zeros((2, 3)), [0.5, 0.5], [1 / 3] * 3, 0.7)
        np.testing.assert_array_equal(gibbs_kernel(inst), np.ones((2, 3)))

    def test_half(self):
        eps = 0.3
        inst = TransportInstance([[eps * np.log(2)]], [1.0], [1.0], eps)
        np.testing.assert_allclose(gibbs_kernel(inst), [[0.5]], rtol=1e-15)

    def test_underflow(self):
        inst = TransportInstance([[1000.0, 0.0]], [1.0], [0.5, 0.5], 0.01)
        with pytest.raises(KernelUnderflowError, match="lse"):
            gibbs_kernel(inst)
        with pytest.raises(KernelUnderflowError):
            step(np.zeros(1), inst)


class TestStep:
    def test_one_by_one_zero_cost(self):
        inst = TransportInstance([[0.0]], [1.0], [1.0], 0.5)
        for x in (-3.0, 0.0, 2.5):
            assert step([x], inst)[0] == pytest.approx(x, abs=1e-15)
            np.testing.assert_allclose(plan([x], inst), [[1.0]], rtol=1e-15)

    def test_constant_cost_closed_form(self, rng):
        inst = constant_cost_instance(rng, 5, 4)
        x = rng.normal(size=5)
        # K = e^{-c/eps} 1 1^T and sum(b) = 1 give F(x) = log a + log sum(e^x).
        expected = np.log(inst.a) + np.log(np.exp(x).sum())
        np.testing.assert_allclose(step(x, inst), expected, atol=1e-13)
        np.testing.assert_allclose(step_lse(x, inst), expected, atol=1e-13)

    @pytest.mark.parametrize("f", [step, step_lse])
    def test_translation(self, rng, f):
        inst = random_instance(rng, 5, 4)
        x = rng.normal(size=5)
        lam = rng.uniform(-5, 5)
        np.testing.assert_allclose(f(x + lam, inst), f(x, inst) + lam, atol=1e-12)

    def test_lse_matches_naive(self, rng):
        for _ in range(20):
            inst = random_instance(rng, 5, 4, eps_range=(0.1, 2.0))
            x = rng.normal(size=5)
            np.testing.assert_allclose(step_lse(x, inst), step(x, inst), atol=1e-12, rtol=0)
            np.testing.assert_allclose(plan(x, inst, "lse"), plan(x, inst, "naive"), atol=1e-14, rtol=1e-12)

    def test_lse_survives_underflow(self):
        inst = TransportInstance([[1000.0, 0.0], [0.0, 1000.0]], [0.5, 0.5], [0.5, 0.5], 0.01)
        out = step_lse(np.zeros(2), inst)
        assert np.all(np.isfinite(out))


class TestPlan:
    def test_constant_cost_at_log_a(self, rng):
        inst = constant_cost_instance(rng, 4, 3)
        np.testing.assert_allclose(plan(np.log(inst.a), inst), np.outer(inst.a, inst.b), atol=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, 6, elements=st.floats(-20, 20)), st.integers(0, 2**31))
    def test_column_sums(self, x, seed):
        inst = random_instance(np.random.default_rng(seed), 6, 5)
        P = plan(x, inst)
        assert np.all(P > 0)
        np.testing.assert_allclose(P.sum(axis=0), inst.b, rtol=1e-14)

    def test_translation(self, rng):
        inst = random_instance(rng, 5, 4)
        x = rng.normal(size=5)
        np.testing.assert_allclose(plan(x + rng.uniform(-5, 5), inst), plan(x, inst), rtol=1e-13)


class TestSolve:
    def test_constant_cost(self, rng):
        inst = constant_cost_instance(rng, 5, 4)
        rep = solve(inst, np.zeros(5))
        assert rep.converged and rep.final_state.iteration <= 2
        np.testing.assert_allclose(plan(rep.x, inst), np.outer(inst.a, inst.b), atol=1e-15)

    def test_one_by_one(self):
        inst = TransportInstance([[3.0]], [1.0], [1.0], 0.1)
        rep = solve(inst)
        assert rep.converged and rep.final_state.iteration <= 1
        np.testing.assert_allclose(plan(rep.x, inst), [[1.0]])

    @pytest.mark.parametrize("mode", ["lse", "naive"])
    def test_random_converges(self, rng, mode):
        inst = random_instance(rng, 20, 10).replace(epsilon=0.5)
        rep = solve(inst, tol=1e-12, record=True, mode=mode)
        assert rep.converged
        assert rep.final_state.marginal_violation <= 1e-12
        assert marginal_violation(rep.x, inst) <= 1.5e-12
        viol = np.array([r.marginal_violation for r in rep.history])
        burn = 3
        assert np.all(np.diff(viol[burn:]) <= 1e-15)

    def test_not_converged_is_flagged(self, rng):
        inst = random_instance(rng, 6, 5).replace(epsilon=0.05)
        rep = solve(inst, tol=1e-14, max_iter=3)
        assert not rep.converged
        assert rep.final_state.iteration == 3

    def test_rejects_bad_tol(self, rng):
        with pytest.raises(ValidationError):
            solve(random_instance(rng, 2, 2), tol=0.0)

    def test_centered_iterates_decrease(self, rng):
        inst = random_instance(rng, 8, 6)
        rep = solve(inst, tol=1e-13, record_iterates=True)
        xs = rep.iterates
        dist = np.array([np.linalg.norm(center(x) - center(xs[-1])) for x in xs[:-1]])
        dist = dist[dist > 1e-12]
        assert np.all(np.diff(dist[2:]) < 0)


class TestMetrics:
    def test_center(self):
        np.testing.assert_array_equal(center([1.0, 1.0]), [0.0, 0.0])
        np.testing.assert_array_equal(center([2.0, 0.0]), [1.0, -1.0])

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, st.integers(1, 10), elements=st.floats(-1e3, 1e3)))
    def test_center_properties(self, x):
        c = center(x)
        assert abs(c.sum()) <= 1e-13 * len(x) * max(1.0, np.max(np.abs(x)))
        np.testing.assert_allclose(center(c), c, atol=1e-12)

    def test_variation(self):
        assert variation_seminorm([4.0, 4.0, 4.0]) == 0.0
        assert variation_seminorm([3.0, 1.0, 2.0]) == 2.0

    @settings(max_examples=100, deadline=None)
    @given(
        arrays(np.float64, st.integers(1, 10), elements=st.floats(-1e3, 1e3)),
        st.floats(-1e3, 1e3),
    )
    def test_variation_shift_invariant(self, x, lam):
        assert variation_seminorm(x + lam) == pytest.approx(variation_seminorm(x), abs=1e-9)

    @settings(max_examples=300, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 12))
    def test_centering_bound(self, seed, n):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=n) * 10, rng.normal(size=n) * 10
        assert np.max(np.abs(center(x) - center(y))) <= variation_seminorm(x - y)

    def test_hilbert(self, rng):
        u = rng.uniform(0.1, 2.0, size=5)
        assert hilbert_distance(u, u) == 0.0
        assert hilbert_distance(u, 3.7 * u) == pytest.approx(0.0, abs=1e-15)
        assert hilbert_distance([np.e, 1.0], [1.0, 1.0]) == pytest.approx(1.0, abs=1e-15)
        with pytest.raises(ValidationError):
            hilbert_distance([1.0, 0.0], [1.0, 1.0])


class TestContractionRatio:
    def test_rank_one(self, rng):
        K = np.outer(rng.uniform(0.5, 2, 4), rng.uniform(0.5, 2, 3))
        theta, kappa = contraction_ratio(K)
        assert theta == pytest.approx(1.0, abs=1e-14)
        assert kappa == pytest.approx(0.0, abs=1e-14)
        assert contraction_ratio(np.ones((3, 3))) == (1.0, 0.0)

    def test_two_by_two(self):
        K = np.array([[1.0, 2.0], [2.0, 1.0]])
        expected_theta = brute_force_theta(K)
        assert expected_theta == 4.0
        theta, kappa = contraction_ratio(K)
        assert theta == pytest.approx(expected_theta, rel=1e-15)
        assert kappa == pytest.approx((np.sqrt(expected_theta) - 1) / (np.sqrt(expected_theta) + 1), rel=1e-15)

    def test_matches_brute_force(self, rng, backend):
        K = rng.uniform(0.1, 3.0, size=(4, 5))
        s = kernels.max_log_cross_ratio(np.log(K), backend=backend)
        assert np.exp(s) == pytest.approx(brute_force_theta(K), rel=1e-12)

    def test_scale_invariant(self, rng):
        K = rng.uniform(0.1, 3.0, size=(5, 4))
        assert contraction_ratio(3.3 * K).theta == pytest.approx(contraction_ratio(K).theta, rel=1e-13)

    def test_size_guard(self):
        with pytest.raises(ValidationError):
            contraction_ratio(np.ones((101, 100)))

    def test_two_iteration_hilbert_contraction(self, rng):
        for _ in range(5):
            inst = random_instance(rng, 6, 5, eps_range=(0.3, 1.0))
            kappa = contraction_ratio(gibbs_kernel(inst)).kappa
            rep = solve(inst, tol=1e-15, max_iter=5000, record_iterates=True)
            xs = rep.iterates
            ref = np.exp(xs[-1])
            d = np.array([hilbert_distance(np.exp(x), ref) for x in xs])
            for k in range(2, len(d) - 2):
                if d[k] <= 1e-10:
                    break
                assert d[k + 2] <= kappa**2 * d[k] * 1.1
