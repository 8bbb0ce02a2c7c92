import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from concord.errors import DegenerateInterval, Infeasible, SingularSystem
from concord.market_data import AssetStats
from concord.portfolio import (
    PortfolioProblem,
    pareto_frontier,
    screen_pool,
    solve_equality_qp,
    solve_long_only,
    solve_trajectory,
    target_return,
)
from oracles import enumerate_long_only, grid_min_variance_3, pareto_brute, random_psd


def stats_of(means, K):
    n = len(means)
    return AssetStats(tuple(f"S{i + 1}" for i in range(n)), np.asarray(means, float), np.asarray(K, float))


def random_instance(rng, n, rho=None):
    K = random_psd(rng, n)
    m = rng.normal(size=n) * 10
    rho = rng.uniform(0.05, 0.95) if rho is None else rho
    s = stats_of(m, K)
    return s, target_return(s, rho)


def residuals(sol, stats):
    x = sol.weights
    return abs(x.sum() - 1.0), abs(stats.means @ x - sol.target_return)


class TestTargetReturn:
    def test_published_rule(self):
        assert target_return(stats_of([0, 10], np.eye(2)), 0.75) == pytest.approx(7.5)

    def test_lower_end(self):
        assert target_return(stats_of([3, -2, 7], np.eye(3)), 0.0) == -2

    def test_midpoint(self):
        assert target_return(stats_of([-4, 2, 6], np.eye(3)), 0.5) == pytest.approx(1.0)

    def test_degenerate(self):
        with pytest.raises(DegenerateInterval):
            target_return(stats_of([1, 1, 1], np.eye(3)), 0.5)


class TestEqualityQP:
    def test_two_assets(self):
        sol = solve_equality_qp(PortfolioProblem(stats_of([0, 10], np.eye(2)), 5.0, long_only=False))
        np.testing.assert_allclose(sol.weights, [0.5, 0.5], atol=1e-12)
        assert sol.variance == pytest.approx(0.5)

    @pytest.mark.parametrize("K", [np.eye(2), [[4.0, 1.0], [1.0, 9.0]], np.zeros((2, 2)) + 1e-3 * np.eye(2)])
    def test_endpoint_determined(self, K):
        sol = solve_equality_qp(PortfolioProblem(stats_of([0, 10], K), 10.0, long_only=False))
        np.testing.assert_allclose(sol.weights, [0.0, 1.0], atol=1e-12)

    def test_three_assets_symmetric(self):
        stats = stats_of([0, 5, 10], np.eye(3))
        sol = solve_equality_qp(PortfolioProblem(stats, 5.0, long_only=False))
        np.testing.assert_allclose(sol.weights, [1 / 3] * 3, atol=1e-12)
        assert sol.variance == pytest.approx(1 / 3)
        assert sol.variance <= grid_min_variance_3(np.eye(3), [0, 5, 10], 5.0) + 1e-4

    def test_stationarity(self, rng):
        stats, m_p = random_instance(rng, 6)
        sol = solve_equality_qp(PortfolioProblem(stats, m_p, long_only=False))
        l1, l2 = sol.multipliers
        np.testing.assert_allclose(2 * stats.covariance @ sol.weights, l1 * stats.means + l2, atol=1e-9)

    def test_singular_reported(self):
        # zero covariance with three assets leaves a free direction
        with pytest.raises(SingularSystem, match="regularization"):
            solve_equality_qp(PortfolioProblem(stats_of([0, 1, 2], np.zeros((3, 3))), 1.0, long_only=False))

    def test_ridge_opt_in(self):
        sol = solve_equality_qp(PortfolioProblem(stats_of([0, 1, 2], np.zeros((3, 3))), 1.0, False, 1e-3))
        assert abs(sol.weights.sum() - 1) < 1e-12

    def test_degenerate_means(self):
        with pytest.raises(DegenerateInterval):
            solve_equality_qp(PortfolioProblem(stats_of([2, 2], np.eye(2)), 2.0, long_only=False))

    def test_constraint_residuals(self, rng):
        for _ in range(200):
            stats, m_p = random_instance(rng, int(rng.integers(2, 11)))
            sol = solve_equality_qp(PortfolioProblem(stats, m_p, long_only=False))
            r_sum, r_ret = residuals(sol, stats)
            assert r_sum <= 1e-9 and r_ret <= 1e-9 * max(1, abs(m_p))
            assert sol.variance == pytest.approx(sol.weights @ stats.covariance @ sol.weights, rel=1e-9, abs=1e-15)

    def test_null_space_perturbations(self, rng):
        stats, m_p = random_instance(rng, 5)
        sol = solve_equality_qp(PortfolioProblem(stats, m_p, long_only=False))
        A = np.vstack([stats.means, np.ones(5)])
        null = np.linalg.svd(A)[2][2:].T
        K = stats.covariance
        for _ in range(1000):
            d = null @ rng.normal(size=null.shape[1])
            d *= rng.uniform(0, 0.1) / np.linalg.norm(d)
            x = sol.weights + d
            assert x @ K @ x >= sol.variance - 1e-9

    def test_grid_oracle(self, rng):
        for _ in range(30):
            stats, m_p = random_instance(rng, 3)
            sol = solve_equality_qp(PortfolioProblem(stats, m_p, long_only=False))
            assert sol.variance <= grid_min_variance_3(stats.covariance, stats.means, m_p) + 1e-4

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.01, 100.0))
    def test_covariance_scaling(self, seed, c):
        stats, m_p = random_instance(np.random.default_rng(seed), 5)
        base = solve_equality_qp(PortfolioProblem(stats, m_p, long_only=False))
        scaled = solve_equality_qp(
            PortfolioProblem(stats_of(stats.means, c * stats.covariance), m_p, long_only=False)
        )
        np.testing.assert_allclose(scaled.weights, base.weights, atol=1e-9)
        assert scaled.variance == pytest.approx(c * base.variance, rel=1e-8)


class TestLongOnly:
    def test_inactive_bounds_identical(self):
        stats = stats_of([0, 5, 10], np.eye(3))
        p = PortfolioProblem(stats, 5.0)
        eq = solve_equality_qp(p)
        lo = solve_long_only(p)
        assert np.array_equal(lo.weights, eq.weights)
        assert lo.variance == eq.variance

    def test_boundary_portfolio(self):
        sol = solve_long_only(PortfolioProblem(stats_of([0, 10], np.eye(2)), 10.0))
        np.testing.assert_allclose(sol.weights, [0.0, 1.0], atol=1e-12)

    def test_infeasible(self):
        with pytest.raises(Infeasible):
            solve_long_only(PortfolioProblem(stats_of([0, 10], np.eye(2)), 11.0))

    def test_bound_becomes_active(self):
        rng = np.random.default_rng(11)
        while True:
            stats, m_p = random_instance(rng, 5)
            eq = solve_equality_qp(PortfolioProblem(stats, m_p, long_only=False))
            if eq.weights.min() < -0.05:
                break
        sol = solve_long_only(PortfolioProblem(stats, m_p))
        assert sol.weights.min() >= -1e-12
        assert sol.active_bounds
        assert sol.variance >= eq.variance - 1e-12
        expected = enumerate_long_only(stats.covariance, stats.means, m_p)
        np.testing.assert_allclose(sol.weights, expected, atol=1e-7)

    def test_enumeration_n4(self, rng):
        stats, m_p = random_instance(rng, 4)
        sol = solve_long_only(PortfolioProblem(stats, m_p))
        np.testing.assert_allclose(sol.weights, enumerate_long_only(stats.covariance, stats.means, m_p), atol=1e-7)

    def test_bound_multipliers_nonnegative(self, rng):
        for _ in range(50):
            stats, m_p = random_instance(rng, 6)
            sol = solve_long_only(PortfolioProblem(stats, m_p))
            l1, l2 = sol.multipliers
            grad = 2 * stats.covariance @ sol.weights - l1 * stats.means - l2
            for i in sol.active_bounds:
                assert grad[i] >= -1e-9 * max(1.0, np.abs(stats.covariance).max(), np.abs(stats.means).max())

    def test_singular_covariance_handled(self):
        # fewer observations than securities: rank-deficient K, long-only still solvable
        rng = np.random.default_rng(3)
        R = rng.normal(size=(4, 8))
        K = np.cov(R, rowvar=False)
        stats = stats_of(rng.normal(size=8) * 5, 0.5 * (K + K.T))
        sol = solve_long_only(PortfolioProblem(stats, target_return(stats, 0.75)))
        r_sum, r_ret = residuals(sol, stats)
        assert r_sum <= 1e-9 and r_ret <= 1e-9 * max(1, abs(sol.target_return))
        assert sol.weights.min() >= -1e-12


class TestTrajectory:
    def test_single_stage(self, rng):
        stats, _ = random_instance(rng, 4)
        traj = solve_trajectory([("2011Q4", stats)], 0.75)
        direct = solve_long_only(PortfolioProblem(stats, target_return(stats, 0.75)))
        assert traj[0][0] == "2011Q4"
        np.testing.assert_array_equal(traj[0][1].weights, direct.weights)

    def _rising_panel(self):
        # security 1's mean rises and its variance falls across 12 stages
        out = []
        for t in range(12):
            means = [4.0 + 0.8 * t, 6.0, 9.0, 3.0]
            K = np.diag([12.0 / (1 + t), 2.0, 5.0, 1.0])
            K[1, 2] = K[2, 1] = 0.5
            out.append((f"s{t + 1:02d}", stats_of(means, K)))
        return out

    def test_rising_security_share(self):
        stages = self._rising_panel()
        traj = solve_trajectory(stages, 0.75)
        shares = [sol.weights[0] for _, sol in traj]
        for (label, stats), (_, sol) in zip(stages, traj):
            direct = solve_long_only(PortfolioProblem(stats, target_return(stats, 0.75)))
            np.testing.assert_array_equal(sol.weights, direct.weights)
        tail = shares[-6:]
        assert all(b >= a - 1e-12 for a, b in zip(tail, tail[1:]))

    def test_parallel_equals_sequential(self):
        stages = self._rising_panel()
        seq = solve_trajectory(stages, 0.75)
        par = solve_trajectory(stages, 0.75, max_workers=4)
        for (a, sa), (b, sb) in zip(seq, par):
            assert a == b and np.array_equal(sa.weights, sb.weights)

    def test_error_carries_stage(self, rng):
        good, _ = random_instance(rng, 3)
        bad = stats_of([1.0, 1.0, 1.0], np.eye(3))
        with pytest.raises(DegenerateInterval) as exc:
            solve_trajectory([("q1", good), ("q2", bad)], 0.75)
        assert exc.value.stage == "q2"
        assert "q2" in str(exc.value)


class TestPareto:
    def test_single(self):
        (p,) = pareto_frontier([(1.0, 2.0)])
        assert not p.dominated

    def test_strict_domination(self):
        out = {p.security_id: p.dominated for p in pareto_frontier([(10, 5), (8, 6)])}
        assert out == {1: False, 2: True}

    def test_ties_not_dominating(self):
        out = pareto_frontier([(1, 1), (1, 1)])
        assert not any(p.dominated for p in out)

    def test_random_vs_brute(self, rng):
        pts = [tuple(p) for p in rng.normal(size=(10, 2))]
        got = {p.security_id: p.dominated for p in pareto_frontier(pts)}
        assert [got[i + 1] for i in range(10)] == pareto_brute(pts)

    @given(st.lists(st.tuples(st.integers(-5, 5), st.integers(0, 5)), min_size=1, max_size=25))
    def test_frontier_properties(self, pts):
        out = pareto_frontier(pts)
        front = [p for p in out if not p.dominated]
        risks = [p.risk for p in front]
        assert risks == sorted(risks)
        flags = pareto_brute(pts)
        assert {p.security_id for p in out if p.dominated} == {i + 1 for i, f in enumerate(flags) if f}
        for p in front:
            for q in front:
                assert not (q.mean >= p.mean and q.risk <= p.risk and (q.mean > p.mean or q.risk < p.risk))
        for p in out:
            if p.dominated:
                assert any(q.mean >= p.mean and q.risk <= p.risk for q in front)


class TestScreening:
    def test_epsilon_zero(self, rng):
        stats, _ = random_instance(rng, 5)
        pool, log = screen_pool(stats, 0.75, epsilon=0.0)
        assert pool.securities == stats.securities and len(log) == 1

    def test_symmetric_zero_weight(self):
        # with K = I, means (0, 10, -10) and m_p = 20/3 the optimum is (1/3, 2/3, 0)
        stats = stats_of([0.0, 10.0, -10.0], np.eye(3))
        direct = solve_equality_qp(PortfolioProblem(stats, 20 / 3, long_only=False))
        assert abs(direct.weights[2]) < 1e-12
        pool, log = screen_pool(stats, 5 / 6, epsilon=1e-6, long_only=False)
        assert pool.securities == ("S1", "S2")
        assert len(log) == 1 and log[0].dropped == ("S3",)
        reduced = solve_equality_qp(PortfolioProblem(pool, 20 / 3, long_only=False))
        np.testing.assert_allclose(reduced.weights, direct.weights[:2], atol=1e-12)

    def test_iteration_cap(self):
        K = np.eye(6)
        K[0, 0] = K[1, 1] = 0.01
        stats = stats_of([0.0, 10.0, 4.0, 5.0, 6.0, 3.0], K * np.diag([1, 1, 400, 400, 400, 400]))
        _, full = screen_pool(stats, 0.5, epsilon=0.05)
        assert sum(len(s.dropped) for s in full) >= 2
        pool, log = screen_pool(stats, 0.5, epsilon=0.05, max_iter=1)
        assert len(log) == 1
        assert len(pool.securities) == 6 - len(log[0].dropped)
