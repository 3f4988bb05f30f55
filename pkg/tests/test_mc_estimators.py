from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from gammaruin.asymptotics import find_tu
from gammaruin.mc_estimators import (
    GridResolutionError,
    InfeasibleGrid,
    PassageSampleSet,
    RuinEstimate,
    append_results,
    apply_scaling,
    estimate_ruin_finite,
    estimate_ruin_grid,
    estimate_ruin_infinite,
    infinite_horizon_window,
    ks_statistic,
    normal_interval,
    read_results,
    ruin_sweep,
    sample_conditional_passages,
    wilson_interval,
)
from gammaruin.variance_models import VarianceModel, brownian_model, multiplex_fbm_model

GAMMAS = (0.1, 0.3, 0.5, 0.7, 0.9)


def zero_model() -> VarianceModel:
    bm = brownian_model()
    zero = lambda t: 0.0 * np.asarray(t, dtype=float)  # noqa: E731
    return VarianceModel(zero, zero, zero, 0.5, 0.5, bm.phi_class, bm.b_at_zero, "zero")


def estimate(hits, n=1000, **kw):
    base = dict(u=1.0, c=1.0, gamma=0.5, T=1.0, delta=1e-3, seed=0)
    base.update(kw)
    return RuinEstimate(hits, n, **base)


class TestIntervals:
    def test_wilson_zero_hits_is_one_sided(self):
        lo, hi = wilson_interval(0, 100)
        assert lo == 0.0 and hi == pytest.approx(1.96 ** 2 / (100 + 1.96 ** 2), rel=1e-3)

    def test_normal_interval_is_symmetric(self):
        lo, hi = normal_interval(500, 1000)
        assert 0.5 - lo == pytest.approx(hi - 0.5)
        assert hi - 0.5 == pytest.approx(1.96 * math.sqrt(0.25 / 1000), rel=1e-3)

    @given(hits=st.integers(0, 500), extra=st.integers(1, 500))
    def test_wilson_contains_point_and_stays_in_unit_interval(self, hits, extra):
        n = hits + extra
        lo, hi = wilson_interval(hits, n)
        assert 0.0 <= lo <= hits / n <= hi <= 1.0

    @pytest.mark.parametrize("hits, method", [(0, "wilson"), (49, "wilson"), (50, "normal"), (900, "normal")])
    def test_method_switch(self, hits, method):
        e = estimate(hits)
        assert e.ci_method == method
        assert e.ci95 == (e.ci_wilson if method == "wilson" else e.ci_normal)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            wilson_interval(0, 0)
        with pytest.raises(ValueError):
            estimate(5, n=0)


class TestMerge:
    @given(a=st.integers(0, 100), b=st.integers(0, 100), c=st.integers(0, 100))
    def test_associative_and_pooled(self, a, b, c):
        ea, eb, ec = estimate(a, 100), estimate(b, 100), estimate(c, 100)
        left, right = ea.merge(eb).merge(ec), ea.merge(eb.merge(ec))
        assert (left.n_hits, left.n_paths) == (right.n_hits, right.n_paths) == (a + b + c, 300)

    def test_rejects_different_configuration(self):
        with pytest.raises(ValueError):
            estimate(1).merge(estimate(1, u=2.0))

    def test_split_streams_merge_to_single_run(self):
        bm = brownian_model()
        kw = dict(pilot=False)
        whole = estimate_ruin_finite(bm, 1.0, 0.5, 0.8, 1.0, 2 ** -10, 2000, 3, **kw)
        a = estimate_ruin_finite(bm, 1.0, 0.5, 0.8, 1.0, 2 ** -10, 1200, 3, **kw)
        b = estimate_ruin_finite(bm, 1.0, 0.5, 0.8, 1.0, 2 ** -10, 800, 3, stream_start=1200, **kw)
        assert a.merge(b).n_hits == whole.n_hits


@pytest.fixture(scope="module")
def sweep():
    return ruin_sweep(brownian_model(), 1.0, GAMMAS, [0.25, 0.5, 1.0, 1.5], [0.25, 0.5, 1.0],
                      2 ** -10, 3000, seed=1, strides=(1, 2, 4))


class TestSweep:
    def test_nondecreasing_in_gamma(self, sweep):
        assert np.all(np.diff(sweep.counts, axis=1) >= 0)

    def test_nonincreasing_in_u(self, sweep):
        assert np.all(np.diff(sweep.counts, axis=3) <= 0)

    def test_nondecreasing_in_horizon(self, sweep):
        assert np.all(np.diff(sweep.counts, axis=2) >= 0)

    def test_finer_grid_sees_more(self, sweep):
        assert np.all(np.diff(sweep.counts, axis=0) <= 0)

    def test_horizon_order_is_irrelevant(self, sweep):
        other = ruin_sweep(brownian_model(), 1.0, GAMMAS, [0.25, 0.5, 1.0, 1.5], [1.0, 0.25, 0.5],
                           2 ** -10, 3000, seed=1, strides=(1, 2, 4))
        assert np.array_equal(other.counts[:, :, [1, 2, 0], :], sweep.counts)

    def test_estimate_lookup(self, sweep):
        e = sweep.estimate(0.5, 1.0, 0.5, stride=2)
        assert e.n_hits == sweep.counts[1, 2, 1, 2] and e.n_paths == 3000

    def test_grid_engine_shows_the_same_monotonicity(self):
        s = ruin_sweep(multiplex_fbm_model([0.3, 0.7]), 1.0, GAMMAS, [0.5, 1.0], [0.5, 1.0], 1 / 256, 1000,
                       seed=2, strides=(1, 2))
        assert np.all(np.diff(s.counts, axis=1) >= 0)
        assert np.all(np.diff(s.counts, axis=0) <= 0)
        assert np.all(np.diff(s.counts, axis=2) >= 0)

    @pytest.mark.parametrize("workers", [2, 5])
    def test_worker_count_does_not_change_counts(self, workers):
        args = (brownian_model(), 1.0, [0.5], [1.0], [1.0], 2 ** -9, 9000, 4)
        assert np.array_equal(ruin_sweep(*args).counts, ruin_sweep(*args, workers=workers).counts)

    def test_zero_level_dominates(self):
        s = ruin_sweep(brownian_model(), 1.0, [0.5], [0.0, 0.1, 0.5], [1.0], 2 ** -10, 500, 5)
        assert np.all(s.counts[..., :1] >= s.counts[..., 1:])

    def test_stride_must_divide_horizon(self):
        with pytest.raises(GridResolutionError):
            ruin_sweep(brownian_model(), 1.0, [0.5], [1.0], [3 * 2 ** -10], 2 ** -10, 10, 0, strides=(2,))

    @pytest.mark.parametrize("kw", [dict(c=0.0), dict(gammas=[1.5]), dict(us=[-1.0])])
    def test_rejects_bad_parameters(self, kw):
        args = dict(model=brownian_model(), c=1.0, gammas=[0.5], us=[1.0], horizons=[1.0], delta=2 ** -10,
                    n=10, seed=0)
        args.update(kw)
        with pytest.raises(ValueError):
            ruin_sweep(**args)


class TestFinite:
    def test_zero_variance_never_ruins(self):
        e = estimate_ruin_finite(zero_model(), 1.0, 0.5, 0.1, 1.0, 2 ** -10, 200, 0, engine="grid")
        assert e.p_hat == 0.0 and e.ci_method == "wilson" and e.ci95[0] == 0.0

    def test_brownian_no_reflection_matches_closed_form(self):
        # gamma = 0 is plain drifted BM; the grid misses a little, so compare with a one-sided margin
        e = estimate_ruin_finite(brownian_model(), 1.0, 0.0, 1.0, 1.0, 2 ** -12, 20_000, 6, pilot=False)
        exact = stats.norm.sf(2.0) + math.exp(-2.0) * stats.norm.sf(0.0)
        assert e.p_hat < exact + 3 * e.stderr
        assert e.p_hat > exact - 0.005

    def test_pilot_flags_coarse_grid(self):
        e = estimate_ruin_finite(brownian_model(), 1.0, 0.5, 0.5, 1.0, 2 ** -10, 20_000, 7)
        assert any("grid bias" in n for n in e.notes)

    def test_grid_estimates_share_paths(self):
        ests = estimate_ruin_grid(brownian_model(), 1.0, [0.2, 0.8], [0.5, 1.0], 1.0, 2 ** -10, 1000, 8, pilot=False)
        hits = {(e.gamma, e.u): e.n_hits for e in ests}
        assert hits[(0.8, 0.5)] >= hits[(0.2, 0.5)] >= hits[(0.2, 1.0)]

    def test_rejects_coarse_grid(self):
        with pytest.raises(GridResolutionError):
            estimate_ruin_finite(brownian_model(), 1.0, 0.5, 1.0, 1.0, 2 ** -9, 200, 0)

    def test_rejects_few_paths(self):
        with pytest.raises(ValueError):
            estimate_ruin_finite(brownian_model(), 1.0, 0.5, 1.0, 1.0, 2 ** -10, 99, 0)

    def test_rejects_nonpositive_horizon(self):
        with pytest.raises(ValueError):
            estimate_ruin_finite(brownian_model(), 1.0, 0.5, 1.0, 0.0, 2 ** -10, 200, 0)


class TestInfinite:
    def test_window_extends_past_most_likely_time(self):
        bm = brownian_model()
        w = infinite_horizon_window(bm, 1.0, 4.0, 1e-2)
        assert w.T_max > 4.0 * find_tu(bm, 1.0, 4.0)
        assert w.delta == pytest.approx(1e-2 * 2 * 2.0 * math.log(4.0))

    def test_rejects_infeasible_grid(self):
        with pytest.raises(InfeasibleGrid):
            infinite_horizon_window(brownian_model(), 1.0, 4.0, 1e-9)

    def test_rejects_small_level(self):
        with pytest.raises(ValueError, match="m\\(u\\)"):
            infinite_horizon_window(brownian_model(), 1.0, 0.5, 1e-2)

    def test_estimate_is_flagged_and_infinite(self):
        e = estimate_ruin_infinite(brownian_model(), 1.0, 0.5, 3.0, 2e-3, 500, 9)
        assert math.isinf(e.T) and "truncated" in e.truncation_note

    def test_longer_window_only_adds_hits(self):
        a = estimate_ruin_infinite(brownian_model(), 1.0, 0.5, 3.0, 2e-3, 2000, 10, window_k=3)
        b = estimate_ruin_infinite(brownian_model(), 1.0, 0.5, 3.0, 2e-3, 2000, 10, window_k=9)
        assert b.n_hits >= a.n_hits

    def test_rejects_few_paths(self):
        with pytest.raises(ValueError):
            estimate_ruin_infinite(brownian_model(), 1.0, 0.5, 3.0, 1e-2, 50, 0)


@pytest.fixture(scope="module")
def finite_set():
    return sample_conditional_passages(brownian_model(), 1.0, 0.5, 0.8, 1.0, 2 ** -10, 200, seed=11)


class TestPassages:
    def test_collects_target_with_ordered_times(self, finite_set):
        s = finite_set
        assert s.n_conditional >= 200 and not s.exhausted
        assert np.all(s.tau1 <= s.tau2) and np.all(s.tau2 <= 1.0 + 1e-12)

    def test_finite_scaling_is_reversed_rate(self, finite_set):
        s = finite_set
        assert np.allclose(s.scaled_tau1, s.scaling["rate"] * (1.0 - s.tau1))
        assert np.all(s.scaled_tau1 >= s.scaled_tau2)

    def test_worker_count_does_not_change_sample(self):
        args = (brownian_model(), 1.0, 0.5, 0.8, 1.0, 2 ** -10, 200, 12)
        a = sample_conditional_passages(*args, batch=500)
        b = sample_conditional_passages(*args, batch=500, workers=3)
        assert np.array_equal(a.tau1, b.tau1) and a.n_paths == b.n_paths

    def test_budget_exhaustion_is_flagged(self):
        s = sample_conditional_passages(brownian_model(), 1.0, 0.5, 3.0, 1.0, 2 ** -10, 200, 13, budget=1000,
                                        batch=500)
        assert s.exhausted and s.n_paths == 1000 and s.n_conditional < 200

    def test_infinite_horizon_uses_centre_and_scale(self):
        s = sample_conditional_passages(brownian_model(), 1.0, 0.5, 2.5, math.inf, 0.01, 200, 14)
        assert set(s.scaling) == {"center", "scale"} and math.isinf(s.T)
        assert s.truncation_note.startswith("truncated")

    def test_rejects_small_target(self):
        with pytest.raises(ValueError):
            sample_conditional_passages(brownian_model(), 1.0, 0.5, 1.0, 1.0, 2 ** -10, 199, 0)

    def test_rejects_coarse_grid(self):
        with pytest.raises(GridResolutionError):
            sample_conditional_passages(brownian_model(), 1.0, 0.5, 1.0, 1.0, 2 ** -9, 200, 0)

    def test_rejects_infeasible_truncation(self):
        with pytest.raises(InfeasibleGrid):
            sample_conditional_passages(brownian_model(), 1.0, 0.5, 3.0, math.inf, 1e-9, 200, 0)

    def test_rejects_mismatched_vectors(self):
        with pytest.raises(ValueError):
            PassageSampleSet(np.zeros(2), np.zeros(3), np.zeros(2), np.zeros(2), {}, 1, 1, 0.5, 1, 0.1, 0, 10)


class TestScaling:
    def test_horizon_maps_to_zero(self):
        s1, s2 = apply_scaling([1.0], [1.0], 1.0, {"rate": 3.0})
        assert s1[0] == 0.0 and s2[0] == 0.0

    @given(t=st.lists(st.floats(0, 1), min_size=2, max_size=20), rate=st.floats(0.1, 100))
    def test_rate_map_reverses_order(self, t, rate):
        s, _ = apply_scaling(t, t, 1.0, {"rate": rate})
        order = np.argsort(t, kind="stable")
        assert np.all(np.diff(s[order]) <= 1e-12)

    @given(t=st.lists(st.floats(0, 10), min_size=2, max_size=20), scale=st.floats(0.1, 10))
    def test_centre_map_preserves_order(self, t, scale):
        s, _ = apply_scaling(t, t, math.inf, {"center": 3.0, "scale": scale})
        order = np.argsort(t, kind="stable")
        assert np.all(np.diff(s[order]) >= -1e-12)


class TestKS:
    def test_reference_sample_is_close(self):
        x = stats.norm.ppf((np.arange(10_000) + 0.5) / 10_000)
        assert ks_statistic(x, "StdNormal") < 0.02
        rng = np.random.default_rng(0)
        assert ks_statistic(rng.exponential(size=10_000), "Exp1") < 0.02

    def test_constant_sample_is_far(self):
        assert ks_statistic(np.zeros(100), "StdNormal") >= 0.5

    def test_minimum_sample_size(self):
        assert ks_statistic(np.linspace(-2, 2, 20), "StdNormal") < 1
        with pytest.raises(ValueError):
            ks_statistic(np.zeros(19), "StdNormal")

    def test_rejects_unknown_reference(self):
        with pytest.raises(ValueError):
            ks_statistic(np.zeros(30), "Cauchy")


class TestStore:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "r.jsonl"
        e = estimate(7, T=math.inf, notes=["x"])
        append_results(path, [e], brownian_model(), timestamp="2000-01-01T00:00:00+00:00")
        append_results(path, [e.merge(e)])
        rows = read_results(path)
        assert len(rows) == 2 and rows[0]["T"] == "inf" and rows[0]["kind"] == "ruin"
        assert rows[0]["timestamp"].startswith("2000") and "code_version" in rows[0]
        back = RuinEstimate.from_dict(rows[0])
        assert back.n_hits == 7 and math.isinf(back.T) and back.notes == ["x"]
        assert rows[1]["n_paths"] == 2000
