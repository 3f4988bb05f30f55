from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from gammaruin.constants_lab import (
    ConstantEstimate,
    ConstantValue,
    ZSpec,
    closed_form_constant,
    closed_form_pickands,
    closed_form_piterbarg,
    estimate_pickands,
    estimate_piterbarg,
    extrapolate,
    piterbarg_ladder,
    read_estimates,
    resolve_constant_specs,
    resolve_finite_constant_specs,
    write_estimates,
)
from gammaruin.variance_models import brownian_model, integrated_model, exponential_correlation, multiplex_fbm_model


def line_pickands_oracle(S: float) -> float:
    """``E sup_{t<=S} exp(sqrt(2) t N - t^2) / S`` by quadrature over ``N``."""
    def f(x):
        t_star = min(max(x / math.sqrt(2.0), 0.0), S)
        return math.exp(math.sqrt(2.0) * t_star * x - t_star ** 2 + stats.norm.logpdf(x))
    edge = S * math.sqrt(2.0)
    val = integrate.quad(f, -np.inf, 0.0)[0] + integrate.quad(f, 0.0, edge)[0] + integrate.quad(f, edge, np.inf)[0]
    return val / S


class TestClosedForms:
    @pytest.mark.parametrize("alpha, a, expected", [
        (0.5, 2.0, 1.5),
        (1.0, 1.0, 1.20710678),
        (0.5, 1.0, 2.0),
        (0.5, 1e12, 1.0),
    ])
    def test_piterbarg(self, alpha, a, expected):
        assert closed_form_piterbarg(alpha, a) == pytest.approx(expected, rel=1e-8)

    @pytest.mark.parametrize("alpha", [0.3, 0.75])
    def test_piterbarg_rejects_other_indices(self, alpha):
        with pytest.raises(ValueError):
            closed_form_piterbarg(alpha, 1.0)

    def test_piterbarg_rejects_nonpositive_a(self):
        with pytest.raises(ValueError):
            closed_form_piterbarg(0.5, 0.0)

    def test_pickands(self):
        assert closed_form_pickands(0.5) == 1.0
        assert closed_form_pickands(1.0) == pytest.approx(1 / math.sqrt(math.pi))

    def test_time_changed_brownian_pickands_scales(self):
        z = ZSpec.scaled(brownian_model(2.0), 1.5)
        assert closed_form_constant(z, "pickands") == pytest.approx(1.5 ** 2 * 2.0)
        assert closed_form_constant(z, "piterbarg", 3.0) == pytest.approx(1 + 1 / 3)

    def test_no_closed_form_for_general_models(self):
        z = ZSpec.scaled(integrated_model(exponential_correlation()), 1.0)
        assert closed_form_constant(z, "pickands") is None
        assert closed_form_constant(ZSpec.fbm(0.3), "piterbarg", 1.0) is None


class TestExtrapolate:
    def test_constant_trace(self):
        assert extrapolate([(8, 2), (16, 2), (32, 2)]) == pytest.approx(2.0, abs=1e-14)

    def test_geometric_decay_in_inverse_horizon(self):
        assert extrapolate([(8, 2.1), (16, 2.05), (32, 2.025)]) == pytest.approx(2.0, abs=1e-12)

    def test_power_of_step(self):
        steps = [0.04, 0.02, 0.01]
        trace = [(s, 3.0 - 0.7 * s ** 0.5) for s in steps]
        assert extrapolate(trace, exponent=0.5) == pytest.approx(3.0, abs=1e-12)

    def test_extra_fields_are_ignored(self):
        assert extrapolate([(8, 2.1, 0.1), (16, 2.05, 0.1), (32, 2.025, 0.1)]) == pytest.approx(2.0)

    @pytest.mark.parametrize("trace", [[(8, 2.0)], [(8, 2.0), (16, 2.0)], [(8, 2), (32, 2), (16, 2)], [(0, 1), (1, 1), (2, 1)]])
    def test_rejects(self, trace):
        with pytest.raises(ValueError):
            extrapolate(trace)

    @given(b0=st.floats(-10, 10), b1=st.floats(-10, 10))
    def test_exact_on_model_family(self, b0, b1):
        trace = [(s, b0 + b1 / s) for s in (4.0, 8.0, 16.0, 32.0)]
        assert extrapolate(trace) == pytest.approx(b0, abs=1e-9)


class TestResolveSpecs:
    def test_finite_phi_uses_scaled_model(self):
        bm = brownian_model(2.0)
        z_h, z_p, a = resolve_constant_specs(0.25, bm, c=3.0)
        assert z_h.kind == "scaled" and z_h.scale == pytest.approx(math.sqrt(2) * 3.0 / 2.0)
        assert z_p.scale == pytest.approx(0.25 * z_h.scale)
        assert a == pytest.approx(3.0)

    def test_infinite_phi_uses_index_at_infinity(self):
        z_h, z_p, _ = resolve_constant_specs(0.5, multiplex_fbm_model([0.3, 0.7]), 1.0)
        assert z_h.alpha == 0.7 and z_p.alpha == 0.7

    def test_zero_phi_uses_index_at_zero(self):
        z_h, _, _ = resolve_constant_specs(0.5, multiplex_fbm_model([0.2, 0.4]), 1.0)
        assert z_h.alpha == 0.2

    def test_finite_horizon_specs(self):
        z_h, z_p, a = resolve_finite_constant_specs(0.5, multiplex_fbm_model([0.3, 0.7]))
        assert z_h.alpha == 0.3 and a == 1.0

    @pytest.mark.parametrize("gamma", [0.0, 1.0])
    def test_rejects_degenerate_gamma(self, gamma):
        with pytest.raises(ValueError):
            resolve_constant_specs(gamma, brownian_model(), 1.0)


class TestEstimators:
    def test_pickands_at_least_origin_term(self):
        e = estimate_pickands(ZSpec.fbm(0.7), 4.0, 1 / 16, 500, seed=2)
        assert e.value >= 1 / 4.0

    def test_degenerate_line_against_quadrature(self):
        e = estimate_pickands(ZSpec.fbm(1.0), 8.0, 8 / 512, 4000, seed=3)
        assert 0.4 < e.value < 0.8
        assert abs(e.value - line_pickands_oracle(8.0)) < 4 * e.stderr + 2e-3

    def test_brownian_pickands_near_one(self):
        e = estimate_pickands(ZSpec.fbm(0.5), 16.0, 1 / 256, 4000, seed=4)
        assert e.value == pytest.approx(1.0, rel=0.1)

    def test_piterbarg_large_a_is_near_one(self):
        e = estimate_piterbarg(ZSpec.fbm(0.5), 100.0, 1.0, 1 / 1024, 2000, seed=5)
        assert 1.0 <= e.value < 1.01

    @pytest.mark.parametrize("alpha, a", [(0.5, 1.0), (0.7, 0.3), (0.3, 3.0)])
    def test_piterbarg_never_below_one(self, alpha, a):
        e = estimate_piterbarg(ZSpec.fbm(alpha), a, 2.0, 1 / 64, 200, seed=6)
        assert e.value >= 1.0
        assert all(row[1] >= 1.0 for row in e.trace)

    def test_piterbarg_nondecreasing_in_horizon(self):
        values = [estimate_piterbarg(ZSpec.fbm(0.5), 1.0, S, 1 / 64, 2000, seed=7) for S in (1.0, 2.0, 4.0)]
        for lo, hi in zip(values, values[1:]):
            assert hi.value >= lo.value - 3 * math.hypot(lo.stderr, hi.stderr)

    def test_pickands_nonincreasing_in_horizon(self):
        values = [estimate_pickands(ZSpec.fbm(0.5), S, 1 / 16, 2000, seed=8) for S in (4.0, 8.0, 16.0)]
        for lo, hi in zip(values, values[1:]):
            assert hi.value <= lo.value + 3 * math.hypot(lo.stderr, hi.stderr)

    def test_step_refinement_nondecreasing_on_coupled_paths(self):
        e = piterbarg_ladder(ZSpec.fbm(0.5), 1.0, 2.0, 1000, seed=9, steps=[1 / 16, 1 / 64, 1 / 256], method="direct")
        values = [row[1] for row in e.trace]
        assert values == sorted(values)

    def test_scaled_brownian_matches_rescaled_fbm(self):
        # 0.5 * X with X of rate 2 is B_1/2 run at half speed
        scaled = estimate_piterbarg(ZSpec.scaled(brownian_model(2.0), 0.5), 1.0, 4.0, 1 / 64, 4000, seed=10)
        plain = estimate_piterbarg(ZSpec.fbm(0.5), 1.0, 2.0, 1 / 128, 4000, seed=11)
        assert abs(scaled.value - plain.value) < 3 * math.hypot(scaled.stderr, plain.stderr)

    def test_tilted_and_direct_agree(self):
        z = ZSpec.fbm(0.6)
        t = estimate_piterbarg(z, 2.0, 2.0, 1 / 64, 4000, seed=12)
        d = estimate_piterbarg(z, 2.0, 2.0, 1 / 64, 4000, seed=12, method="direct")
        assert abs(t.value - d.value) < 4 * math.hypot(t.stderr, d.stderr)
        assert d.overflow_count == 0

    def test_plateau_flag_on_short_horizon(self):
        e = estimate_piterbarg(ZSpec.fbm(0.5), 0.2, 1.0, 1 / 64, 500, seed=13)
        assert any("plateau" in f for f in e.flags)

    @pytest.mark.parametrize("kwargs", [
        dict(S1=1.0, step=1 / 32),
        dict(S1=1.0, step=0.3),
        dict(S1=-1.0, step=1 / 64),
    ])
    def test_grid_preconditions(self, kwargs):
        with pytest.raises(ValueError):
            estimate_piterbarg(ZSpec.fbm(0.5), 1.0, kwargs["S1"], kwargs["step"], 100, 0)

    def test_rejects_nonpositive_a(self):
        with pytest.raises(ValueError):
            estimate_piterbarg(ZSpec.fbm(0.5), 0.0, 1.0, 1 / 64, 100, 0)

    def test_worker_count_does_not_change_result(self):
        z = ZSpec.fbm(0.5)
        one = estimate_piterbarg(z, 1.0, 2.0, 1 / 64, 600, seed=14, workers=1)
        three = estimate_piterbarg(z, 1.0, 2.0, 1 / 64, 600, seed=14, workers=3)
        assert one.value == three.value and one.stderr == three.stderr


class TestRecords:
    def test_json_lines_round_trip(self, tmp_path):
        e = estimate_piterbarg(ZSpec.fbm(0.5), 1.0, 1.0, 1 / 64, 100, seed=1)
        path = tmp_path / "c.jsonl"
        write_estimates(path, [e, e])
        back = read_estimates(path)
        assert len(back) == 2 and isinstance(back[0], ConstantEstimate)
        assert back[0].to_dict() == e.to_dict()

    def test_constant_value_must_be_positive(self):
        with pytest.raises(ValueError):
            ConstantValue(0.0, "literal", "pickands")
