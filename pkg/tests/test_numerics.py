import numpy as np
import pytest
from scipy.special import polygamma

from fencekit.errors import (
    DegreesOfFreedomTooSmall,
    DimensionMismatch,
    OrderOutOfRange,
    RankDeficient,
)
from fencekit.numerics import (
    RngStream,
    f_distribution_mean_of_gap,
    f_distribution_sd_of_gap,
    gauss_hermite_rule,
    solve_least_squares,
)


class TestRngStream:
    def test_same_key_same_draws(self):
        a = RngStream(123, 7, "x").generator().standard_normal(32)
        b = RngStream(123, 7, "x").generator().standard_normal(32)
        assert np.array_equal(a, b)

    def test_distinct_streams_differ(self):
        a = RngStream(123, 0).generator().standard_normal(32)
        b = RngStream(123, 1).generator().standard_normal(32)
        c = RngStream(123, 0, "other").generator().standard_normal(32)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_streams_look_independent(self):
        # correlation across many sibling streams stays at noise level
        draws = np.stack(
            [RngStream(5, i).generator().standard_normal(2000) for i in range(8)]
        )
        corr = np.corrcoef(draws)
        off = corr[~np.eye(8, dtype=bool)]
        assert np.abs(off).max() < 0.08

    def test_substream_inherits_fields(self):
        s = RngStream(9, 2, "a").substream(purpose="b")
        assert (s.master_seed, s.stream_id, s.purpose) == (9, 2, "b")


class TestSolveLeastSquares:
    def test_intercept_only_hand_case(self):
        coef, rss = solve_least_squares(np.ones((2, 1)), np.array([1.0, -1.0]))
        assert coef == pytest.approx([0.0], abs=1e-12)
        assert rss == pytest.approx(2.0, abs=1e-12)

    def test_square_full_rank_interpolates(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((5, 5)) + 3 * np.eye(5)
        y = rng.standard_normal(5)
        _, rss = solve_least_squares(X, y)
        assert rss == pytest.approx(0.0, abs=1e-16)

    def test_matches_normal_equations_oracle(self):
        rng = np.random.default_rng(42)
        X = rng.standard_normal((10, 3))
        y = rng.standard_normal(10)
        coef, rss = solve_least_squares(X, y)
        # independent oracle: solve the normal equations directly
        beta = np.linalg.solve(X.T @ X, X.T @ y)
        resid = y - X @ beta
        assert coef == pytest.approx(beta, rel=1e-9)
        assert rss == pytest.approx(float(resid @ resid), rel=1e-9)

    def test_residual_orthogonal_to_columns(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = rng.integers(5, 40)
            q = rng.integers(1, min(n, 6))
            X = rng.standard_normal((n, q))
            y = rng.standard_normal(n)
            coef, _ = solve_least_squares(X, y)
            resid = y - X @ coef
            assert np.abs(X.T @ resid).max() <= 1e-8 * np.linalg.norm(y)

    def test_rank_deficient_raises(self):
        X = np.column_stack([np.ones(6), np.ones(6)])
        with pytest.raises(RankDeficient):
            solve_least_squares(X, np.arange(6.0))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            solve_least_squares(np.ones((4, 1)), np.ones(5))
        with pytest.raises(DimensionMismatch):
            solve_least_squares(np.ones((2, 3)), np.ones(2))


class TestGaussHermite:
    def test_order_one_is_the_mean(self):
        rule = gauss_hermite_rule(1)
        assert rule.nodes == pytest.approx([0.0], abs=1e-14)
        assert rule.weights == pytest.approx([1.0], abs=1e-14)

    def test_weights_sum_to_one(self):
        for order in (1, 2, 5, 10, 40, 100):
            rule = gauss_hermite_rule(order)
            assert abs(rule.weights.sum() - 1.0) <= 1e-12
            assert np.all(rule.weights > 0)

    def test_polynomial_exactness(self):
        # E[Z^k] for standard normal: 0 odd, (k-1)!! even
        rule = gauss_hermite_rule(10)
        assert rule.expectation(lambda x: x**2) == pytest.approx(1.0, abs=1e-10)
        assert rule.expectation(lambda x: x**3) == pytest.approx(0.0, abs=1e-10)
        assert rule.expectation(lambda x: x**8) == pytest.approx(105.0, rel=1e-10)

    def test_lognormal_mean_oracle(self):
        rule = gauss_hermite_rule(20)
        assert rule.expectation(np.exp) == pytest.approx(np.exp(0.5), abs=1e-8)

    def test_order_out_of_range(self):
        for order in (0, -1, 101):
            with pytest.raises(OrderOutOfRange):
                gauss_hermite_rule(order)


class TestFGapSd:
    def test_zero_degrees_is_zero(self):
        assert f_distribution_sd_of_gap(30, 5, 5) == 0.0
        assert f_distribution_mean_of_gap(30, 5, 5) == 0.0

    @pytest.mark.parametrize("m,K,p", [(30, 5, 2), (30, 5, 4)])
    def test_monte_carlo_oracle(self, m, K, p):
        d1, d2 = K - p, m - K - 1
        rng = np.random.default_rng(2718)
        F = rng.f(d1, d2, size=10**6)
        draws = (m / 2.0) * np.log1p(d1 / d2 * F)
        sd = f_distribution_sd_of_gap(m, K, p)
        mc_se = draws.std() / np.sqrt(draws.size)  # se of the sd is of this order
        assert sd == pytest.approx(draws.std(), rel=5e-3)
        assert abs(f_distribution_mean_of_gap(m, K, p) - draws.mean()) < 3 * mc_se

    @pytest.mark.parametrize("m,K,p", [(30, 5, 2), (50, 5, 1), (100, 6, 3)])
    def test_trigamma_closed_form(self, m, K, p):
        # -(m/2) log(1-u) with u ~ Beta(d1/2, d2/2) has variance
        # (m/2)^2 (psi'(d2/2) - psi'((d1+d2)/2))
        d1, d2 = K - p, m - K - 1
        closed = (m / 2.0) * np.sqrt(polygamma(1, d2 / 2) - polygamma(1, (d1 + d2) / 2))
        assert f_distribution_sd_of_gap(m, K, p) == pytest.approx(float(closed), abs=1e-9)

    def test_decreasing_in_m(self):
        vals = [f_distribution_sd_of_gap(m, 5, 3) for m in (20, 30, 50, 100)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_approaches_chisq_approx(self):
        # sd -> sqrt((K-p)/2) as m grows
        target = np.sqrt((5 - 3) / 2.0)
        errs = [abs(f_distribution_sd_of_gap(m, 5, 3) - target) for m in (30, 100, 1000)]
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 0.01

    def test_preconditions(self):
        with pytest.raises(DegreesOfFreedomTooSmall):
            f_distribution_sd_of_gap(30, 5, 6)
        with pytest.raises(DegreesOfFreedomTooSmall):
            f_distribution_sd_of_gap(8, 5, 2)
