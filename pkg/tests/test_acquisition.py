import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from warpbo.acquisition import (
    AcquisitionContext,
    expected_improvement,
    gamma,
    marginal_ei,
    marginal_ei_and_grad,
    marginal_ei_many,
    maximize_acquisition,
)
from warpbo.gp import HyperState, ObservationSet, fit
from warpbo.kernels import KernelParams
from warpbo.warping import WarpingParams

from oracles import gp_oracle

PHI0 = 1.0 / math.sqrt(2.0 * math.pi)


def posterior(X, y, ls=0.2, amp=1.0, noise=1e-6, mean=0.0, warp=None):
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    w = warp or WarpingParams.identity(d)
    h = HyperState(KernelParams(amp, np.full(d, ls), "matern52"), noise, mean, (w,))
    return fit(ObservationSet(X, y), h), h


class TestGamma:
    def test_examples(self):
        assert gamma(0.5, 1.0, 0.5) == 0.0
        assert gamma(-1.5, 2.0, 0.5) == 1.0
        assert gamma(1.3, 0.4, 1.0) == pytest.approx(-0.75, abs=1e-15)

    def test_rejects_nonpositive_sd(self):
        with pytest.raises(ValueError):
            gamma(0.0, 0.0, 1.0)


class TestExpectedImprovement:
    def test_at_incumbent(self):
        assert expected_improvement(2.0, 1.0, 2.0) == pytest.approx(PHI0, abs=1e-15)

    def test_degenerate_branch(self):
        assert expected_improvement(7.0, 0.0, 2.0) == 0.0
        assert expected_improvement(-1.0, 0.0, 2.0) == 3.0

    def test_monte_carlo(self):
        rng = np.random.default_rng(0)
        mean, sd, fb = -1.0, 0.5, 0.0
        z = rng.normal(mean, sd, 2_000_000)
        imp = np.maximum(fb - z, 0.0)
        se = imp.std() / math.sqrt(z.size)
        assert abs(expected_improvement(mean, sd, fb) - imp.mean()) <= 3 * se

    def test_against_scipy_formula(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            m, s, fb = rng.normal(), rng.uniform(0.01, 3), rng.normal()
            g = (fb - m) / s
            ref = s * (g * norm.cdf(g) + norm.pdf(g))
            assert expected_improvement(m, s, fb) == pytest.approx(ref, rel=1e-12, abs=1e-300)

    def test_rejects_negative_sd(self):
        with pytest.raises(ValueError):
            expected_improvement(0.0, -1.0, 0.0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-5, 5), st.floats(0.01, 5), st.floats(-5, 5), st.floats(-100, 100))
    def test_translation(self, m, s, fb, c):
        assert expected_improvement(m + c, s, fb + c) == pytest.approx(expected_improvement(m, s, fb), abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-3, 3), st.floats(0.05, 3), st.floats(0.01, 1.0))
    def test_increasing_in_sd(self, m, s, ds):
        # beyond |gamma| ~ 8 the increment drops below one ulp of the value
        assume(abs(m) < 8 * s)
        assert expected_improvement(m, s + ds, 0.0) > expected_improvement(m, s, 0.0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-30, 30), st.floats(1e-3, 3), st.floats(1e-3, 1.0))
    def test_nondecreasing_in_sd(self, m, s, ds):
        assert expected_improvement(m, s + ds, 0.0) >= expected_improvement(m, s, 0.0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-3, 3), st.floats(0.05, 3), st.floats(0.01, 1.0))
    def test_decreasing_in_mean(self, m, s, dm):
        assert expected_improvement(m + dm, s, 0.0) <= expected_improvement(m, s, 0.0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-50, 50), st.floats(0.0, 10), st.floats(-50, 50))
    def test_nonnegative(self, m, s, fb):
        assert expected_improvement(m, s, fb) >= 0.0


class TestMarginal:
    def setup_method(self):
        rng = np.random.default_rng(2)
        self.X = rng.uniform(size=(6, 2))
        self.y = rng.normal(size=6)
        self.fb = float(self.y.min())
        self.posts = []
        for i in range(5):
            ps, _ = posterior(self.X, self.y, ls=0.1 + 0.1 * i, amp=0.5 + 0.3 * i, noise=1e-3 * (i + 1),
                              mean=0.1 * i, warp=WarpingParams([1 + 0.2 * i, 1.0], [1.0, 1 + 0.3 * i]))
            self.posts.append(ps)

    def test_single_equals_plain(self):
        ctx = AcquisitionContext(self.posts[:1], self.fb)
        x = np.array([0.3, 0.7])
        m, v = self.posts[0].predict_many(x[None])
        assert marginal_ei(ctx, x) == pytest.approx(expected_improvement(m[0], math.sqrt(v[0]), self.fb), abs=1e-15)

    def test_duplicates_equal_single(self):
        x = np.array([0.55, 0.15])
        one = marginal_ei(AcquisitionContext(self.posts[:1], self.fb), x)
        two = marginal_ei(AcquisitionContext([self.posts[0]] * 2, self.fb), x)
        assert two == pytest.approx(one, rel=1e-15)

    def test_five_sample_loop_average(self):
        ctx = AcquisitionContext(self.posts, self.fb)
        rng = np.random.default_rng(3)
        for x in rng.uniform(size=(20, 2)):
            ref = 0.0
            for ps in self.posts:
                m, v = ps.predict_many(x[None])
                ref += expected_improvement(m[0], math.sqrt(v[0]), self.fb)
            assert marginal_ei(ctx, x) == pytest.approx(ref / 5, rel=1e-12, abs=1e-15)

    def test_many_matches_single(self):
        ctx = AcquisitionContext(self.posts, self.fb)
        X = np.random.default_rng(4).uniform(size=(3000, 2))
        vals = marginal_ei_many(ctx, X)
        for i in (0, 2047, 2048, 2999):
            assert vals[i] == pytest.approx(marginal_ei(ctx, X[i]), rel=1e-13, abs=1e-16)

    def test_gradient_finite_difference(self):
        ctx = AcquisitionContext(self.posts, self.fb)
        x = np.array([0.37, 0.61])
        v, g = marginal_ei_and_grad(ctx, x)
        assert v == pytest.approx(marginal_ei(ctx, x), rel=1e-12)
        eps = 1e-6
        for d in range(2):
            e = np.zeros(2)
            e[d] = eps
            fd = (marginal_ei(ctx, x + e) - marginal_ei(ctx, x - e)) / (2 * eps)
            assert g[d] == pytest.approx(fd, rel=1e-4, abs=1e-8)

    def test_empty_context_rejected(self):
        with pytest.raises(ValueError):
            AcquisitionContext([], 0.0)


class TestMaximize:
    # symmetric design around 0.42 whose EI peak sits in the widest gap
    XS = [[0.0], [0.11], [0.22], [0.62], [0.73], [0.84], [0.95], [1.0]]

    def test_known_argmax(self):
        y = [1.0] * 8
        ps, h = posterior(self.XS, y, ls=0.15)
        ctx = AcquisitionContext([ps], 1.0)
        grid = np.linspace(0, 1, 10_001)
        means, variances, _, _ = gp_oracle(np.array(self.XS), y, [0] * 8, grid[:, None], [0] * grid.size,
                                           1.0, [0.15], 1e-6, 0.0, [[1.0]], [[1.0]], [[1.0]], "matern52")
        ei = [expected_improvement(m, math.sqrt(max(v, 0)), 1.0) for m, v in zip(means, variances)]
        grid_arg = grid[int(np.argmax(ei))]
        assert grid_arg == pytest.approx(0.42, abs=1e-3)
        x = maximize_acquisition(ctx, 1, 1000, np.random.default_rng(0))
        assert abs(x[0] - grid_arg) <= 0.01

    def test_zero_acquisition_returns_valid_point(self):
        # every prediction sits far above the incumbent with vanishing spread
        ps, _ = posterior([[0.5]], [0.0], ls=5.0, amp=1e-12, noise=1e-300, mean=100.0)
        x = maximize_acquisition(AcquisitionContext([ps], -1e6), 1, 50, np.random.default_rng(0))
        assert x.shape == (1,) and 0.0 <= x[0] <= 1.0

    def test_deterministic_and_bounded(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(size=(8, 3))
        y = rng.normal(size=8)
        ps, _ = posterior(X, y, ls=0.3)
        ctx = AcquisitionContext([ps], float(y.min()))
        a = maximize_acquisition(ctx, 3, 300, np.random.default_rng(9), observed=X)
        b = maximize_acquisition(ctx, 3, 300, np.random.default_rng(9), observed=X)
        np.testing.assert_array_equal(a, b)
        for seed in range(10):
            x = maximize_acquisition(ctx, 3, 100, np.random.default_rng(seed), observed=X)
            assert np.all((x >= 0) & (x <= 1))

    def test_exclusion_zone(self):
        ps, _ = posterior(self.XS, [1.0] * 8, ls=0.15)
        ctx = AcquisitionContext([ps], 1.0)
        free = maximize_acquisition(ctx, 1, 1000, np.random.default_rng(0))
        x = maximize_acquisition(ctx, 1, 1000, np.random.default_rng(0), exclude=free[None])
        assert abs(x[0] - free[0]) > 0.01

    def test_budget_validation(self):
        ps, _ = posterior([[0.5]], [0.0])
        with pytest.raises(ValueError):
            maximize_acquisition(AcquisitionContext([ps], 0.0), 1, 0, np.random.default_rng(0))

    def test_tiny_budget_skips_refinement(self):
        ps, _ = posterior(self.XS, [1.0] * 8, ls=0.15)
        x = maximize_acquisition(AcquisitionContext([ps], 1.0), 1, 1, np.random.default_rng(0))
        assert 0.0 <= x[0] <= 1.0
