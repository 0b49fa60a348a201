import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from warpbo.engine import (
    Dimension,
    EngineConfig,
    ObservationError,
    SearchSpace,
    StateError,
    best_so_far,
    denormalize,
    dumps_state,
    initial_design_point,
    loads_state,
    mean_warping_export,
    new_state,
    normalize,
    observe,
    run_loop,
    suggest,
    _dedupe,
)
from warpbo.kernels import KernelParams
from warpbo.gp import HyperState
from warpbo.slice import default_hyper_state
from warpbo.warping import WarpingParams, default_prior, sample_prior

UNIT = SearchSpace((Dimension("x", 0.0, 1.0),))
FAST = EngineConfig(burn_in_initial=10, burn_in=3, num_samples=3, acq_budget=200)


def quad(x):
    return float((x[0] - 0.7) ** 2)


class TestSpace:
    def test_linear(self):
        sp = SearchSpace((Dimension("a", 0.0, 10.0),))
        assert normalize(sp, [5.0])[0] == 0.5

    def test_log(self):
        sp = SearchSpace((Dimension("a", 1.0, 100.0, log=True),))
        assert normalize(sp, [10.0])[0] == pytest.approx(0.5, abs=1e-15)

    def test_dict_point(self):
        sp = SearchSpace((Dimension("a", 0.0, 2.0), Dimension("b", -1.0, 1.0)))
        np.testing.assert_array_equal(normalize(sp, {"b": 0.0, "a": 0.5}), [0.25, 0.5])

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-1e3, 1e3), st.floats(1e-3, 1e3), st.floats(0, 1), st.booleans())
    def test_round_trip(self, lo, width, frac, log):
        if log:
            lo = abs(lo) + 1e-3
        d = Dimension("a", lo, lo + width, log)
        sp = SearchSpace((d,))
        raw = lo + frac * width
        raw = min(max(raw, d.lower), d.upper)
        back = denormalize(sp, normalize(sp, [raw]))[0]
        assert back == pytest.approx(raw, rel=1e-12, abs=1e-12 * max(1.0, abs(lo) + width))

    def test_out_of_bounds(self):
        with pytest.raises(ObservationError):
            normalize(UNIT, [1.5])

    def test_invalid_spaces(self):
        with pytest.raises(ValueError):
            Dimension("a", 1.0, 1.0)
        with pytest.raises(ValueError):
            Dimension("a", -1.0, 1.0, log=True)
        with pytest.raises(ValueError):
            SearchSpace((Dimension("a", 0, 1), Dimension("a", 0, 1)))
        with pytest.raises(ValueError):
            SearchSpace((Dimension("a", 0, 1),), tasks=("t", "t"))

    def test_task_lookup(self):
        sp = SearchSpace((Dimension("a", 0, 1),), tasks=("s", "t"))
        assert sp.task_index("t") == 1 and sp.task_index(0) == 0
        assert UNIT.task_index(None) == 0
        with pytest.raises(ValueError):
            sp.task_index(None)
        with pytest.raises(ValueError):
            sp.task_index("u")


class TestSuggest:
    def test_golden_first_point(self):
        sp = SearchSpace((Dimension("a", 0.0, 1.0), Dimension("b", 0.0, 1.0)))
        x, _ = suggest(new_state(sp, seed=0))
        np.testing.assert_array_equal(x, [0.40994958858937025, 0.9641202185302973])
        np.testing.assert_array_equal(initial_design_point(sp, 0, 0, 0), x)

    def test_init_points_differ_by_task(self):
        sp = SearchSpace((Dimension("a", 0, 1),), tasks=("s", "t"))
        assert initial_design_point(sp, 0, 0, 0)[0] != initial_design_point(sp, 0, 1, 0)[0]

    def test_does_not_mutate(self):
        st0 = new_state(UNIT, FAST, 1)
        st0 = observe(observe(st0, None, [0.1], 1.0), None, [0.9], 2.0)
        before = dumps_state(st0)
        suggest(st0)
        assert dumps_state(st0) == before

    def test_idempotent(self):
        st0 = observe(observe(new_state(UNIT, FAST, 1), None, [0.1], 1.0), None, [0.9], 2.0)
        a, st1 = suggest(st0)
        b, st2 = suggest(st1)
        c, _ = suggest(st0)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(a, c)
        assert st1.samples_n == 2

    def test_within_bounds(self):
        sp = SearchSpace((Dimension("a", -5.0, 5.0), Dimension("b", 1e-3, 10.0, log=True)))
        state = run_loop(new_state(sp, FAST, 3), lambda x: float(np.sum(x)), 8)
        for o in state.observations:
            assert -5 <= o.x[0] <= 5 and 1e-3 <= o.x[1] <= 10
        X, _, _ = state.normalized()
        assert np.all((X >= 0) & (X <= 1))

    def test_duplicate_perturbed(self):
        existing = np.array([[0.3, 0.6], [0.9, 0.1]])
        rng = np.random.default_rng(0)
        moved = _dedupe(np.array([0.3, 0.6 + 5e-10]), existing, rng)
        assert 1e-9 < np.max(np.abs(moved - existing[0])) <= 5e-4
        fresh = np.array([0.5, 0.5])
        np.testing.assert_array_equal(_dedupe(fresh, existing, rng), fresh)

    @pytest.mark.slow
    def test_quadratic_converges(self):
        for seed in range(10):
            state = run_loop(new_state(UNIT, EngineConfig(), seed), quad, 15)
            x, _ = state.incumbent()
            assert abs(x[0] - 0.7) <= 0.05, seed


class TestObserve:
    def test_incumbent(self):
        st0 = new_state(UNIT)
        for x, y in [(0.1, 3.0), (0.5, -1.0), (0.9, 2.0)]:
            st0 = observe(st0, None, [x], y)
        x, y = st0.incumbent()
        assert y == -1.0 and x[0] == 0.5
        assert st0.iteration == 3
        assert best_so_far(st0) == [3.0, -1.0, -1.0]

    def test_rejects_bad_values(self):
        st0 = new_state(UNIT)
        for y in (math.nan, math.inf, "abc"):
            with pytest.raises(ObservationError):
                observe(st0, None, [0.5], y)
        with pytest.raises(ObservationError):
            observe(st0, None, [1.5], 0.0)
        with pytest.raises(ObservationError):
            observe(st0, None, [0.5, 0.5], 0.0)

    def test_commute_as_sets(self):
        a = observe(observe(new_state(UNIT), None, [0.1], 1.0), None, [0.2], 2.0)
        b = observe(observe(new_state(UNIT), None, [0.2], 2.0), None, [0.1], 1.0)
        assert set(a.observations) == set(b.observations)

    def test_per_task_incumbent(self):
        sp = SearchSpace((Dimension("a", 0, 1),), tasks=("s", "t"))
        st0 = observe(observe(new_state(sp), "s", [0.1], 5.0), "t", [0.2], -5.0)
        assert st0.incumbent("s")[1] == 5.0
        assert st0.incumbent("t")[1] == -5.0


class TestRunLoop:
    def test_noop_when_budget_met(self):
        st0 = observe(observe(new_state(UNIT, FAST), None, [0.1], 1.0), None, [0.2], 2.0)
        assert run_loop(st0, quad, 2) is st0

    def test_trace_nonincreasing(self):
        state = run_loop(new_state(UNIT, FAST, 0), quad, 8)
        tr = best_so_far(state)
        assert len(tr) == 8
        assert all(b <= a for a, b in zip(tr, tr[1:]))

    def test_retry_then_succeed(self):
        calls = []

        def flaky(x):
            calls.append(1)
            if len(calls) == 1:
                raise RuntimeError("transient")
            return quad(x)

        state = run_loop(new_state(UNIT, FAST, 0), flaky, 2)
        assert state.n == 2 and len(calls) == 3

    def test_skip_after_second_failure(self):
        def bad(x):
            raise RuntimeError("always")

        with pytest.warns(RuntimeWarning, match="skipping"):
            state = run_loop(new_state(UNIT, FAST, 0), bad, 2)
        assert state.n == 0

    def test_failed_points_not_repeated(self):
        tried = []

        def picky(x):
            tried.append(float(x[0]))
            if len(tried) <= 2 or 6 <= len(tried) <= 7:
                raise RuntimeError("refuse")
            return quad(x)

        with pytest.warns(RuntimeWarning):
            state = run_loop(new_state(UNIT, FAST, 0), picky, 5)
        assert len(state.failures) == 2 and state.n == 3
        failed = {tried[0], tried[5]}
        assert all(abs(o.x[0] - f) > 1e-3 for o in state.observations for f in failed)
        back = loads_state(dumps_state(state))
        assert back == state
        assert run_loop(back, picky, 5) is back

    def test_nonfinite_counts_as_failure(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            state = run_loop(new_state(UNIT, FAST, 0), lambda x: math.nan, 3)
        assert state.n == 0

    def test_callback(self):
        seen = []
        run_loop(new_state(UNIT, FAST, 0), quad, 3, callback=lambda s, o: seen.append(o.y))
        assert len(seen) == 3


class TestModes:
    def test_warping_off_pins_identity(self):
        cfg = EngineConfig(warping=False, burn_in_initial=5, burn_in=2, num_samples=3, acq_budget=100)
        state = run_loop(new_state(UNIT, cfg, 0), quad, 4)
        assert all(w.is_identity for h in state.samples for w in h.warpings)

    def test_single_task_name_irrelevant(self):
        a = run_loop(new_state(UNIT, FAST, 4), quad, 5)
        b = run_loop(new_state(SearchSpace(UNIT.dims, tasks=("only",)), FAST, 4), quad, 5)
        assert [o.x for o in a.observations] == [o.x for o in b.observations]
        assert a.samples == b.samples

    def test_multitask_runs(self):
        sp = SearchSpace((Dimension("a", 0, 1),), tasks=("s", "t"))
        st0 = new_state(sp, FAST, 0)
        st0 = run_loop(st0, quad, 3, task="s")
        st0 = run_loop(st0, lambda x: quad(x) + 1, 4, task="t")
        assert len(st0.task_observations("s")) == 3 and len(st0.task_observations("t")) == 4
        assert st0.samples[0].task_cov is not None


class TestSerialization:
    def test_round_trip_after_run(self):
        state = run_loop(new_state(UNIT, FAST, 2), quad, 4)
        text = dumps_state(state)
        back = loads_state(text)
        assert dumps_state(back) == text
        assert back == state

    def test_resume_matches_uninterrupted(self):
        full = run_loop(new_state(UNIT, FAST, 5), quad, 5)
        half = loads_state(dumps_state(run_loop(new_state(UNIT, FAST, 5), quad, 3)))
        assert dumps_state(run_loop(half, quad, 5)) == dumps_state(full)

    def test_rejects_corrupt(self):
        with pytest.raises(StateError):
            loads_state("{not json")
        with pytest.raises(StateError):
            loads_state("[]")
        good = dumps_state(new_state(UNIT))
        with pytest.raises(StateError):
            loads_state(good.replace('"version": 1', '"version": 99'))
        with pytest.raises(StateError):
            loads_state(good.replace('"seed"', '"sead"'))


class TestWarpingExport:
    def _h(self, a, b):
        h = default_hyper_state(1)
        return HyperState(h.kernel, h.noise, h.mean, (WarpingParams([a], [b]),))

    def test_identity(self):
        table = mean_warping_export(new_state(UNIT), [self._h(1.0, 1.0)] * 3, grid=11)
        u, m, s = table[(0, 0)]
        np.testing.assert_allclose(m, u, rtol=0, atol=1e-15)
        np.testing.assert_allclose(s, 0.0, rtol=0, atol=1e-15)

    def test_two_shapes_midpoint(self):
        u, m, _ = mean_warping_export(new_state(UNIT), [self._h(2.0, 1.0), self._h(1.0, 2.0)], grid=3)[(0, 0)]
        assert m[1] == pytest.approx(0.5, abs=1e-15)

    def test_prior_draws_agree(self):
        p = default_prior()
        means = []
        for seed in (0, 1):
            rng = np.random.default_rng(seed)
            hs = [HyperState(KernelParams(1.0, [0.5]), 1e-3, 0.0, (sample_prior(p, rng, 1),)) for _ in range(100)]
            u, m, s = mean_warping_export(new_state(UNIT), hs, grid=21)[(0, 0)]
            means.append((m, s))
        (m0, s0), (m1, s1) = means
        se = np.sqrt((s0**2 + s1**2) / 100)
        assert np.all(np.abs(m0 - m1) <= 4 * se + 1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mean_warping_export(new_state(UNIT), [])
