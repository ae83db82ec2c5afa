import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from hbab.design import enumerate_comparisons
from hbab.estimate import CellEstimate
from hbab.seqtest import (
    ComparisonResult,
    TauSpec,
    bayes_factor,
    log_bayes_factor,
    replay_trace,
    resolve_tau,
    run_all_comparisons,
    update_comparison,
)
from tests.test_design import make_spec


class TestResolveTau:
    def test_fixed(self):
        assert resolve_tau(TauSpec.fixed(0.1), 0.5) == 0.1

    def test_dynamic_squares_difference(self):
        assert resolve_tau(TauSpec.dynamic(), 0.05) == pytest.approx(0.0025)

    def test_dynamic_floored_at_zero_difference(self):
        assert resolve_tau(TauSpec.dynamic(), 0.0) == 1e-8

    def test_learnt(self):
        assert resolve_tau(TauSpec.learnt(0.007), 0.1) == 0.007

    def test_validation(self):
        with pytest.raises(ValueError):
            TauSpec.fixed(0.0)
        with pytest.raises(ValueError):
            TauSpec("bogus", 1.0)


class TestBayesFactor:
    def test_zero_difference_favors_null(self):
        v, tau = 1e-4, 0.1
        k = bayes_factor(0.0, v, tau)
        assert k == pytest.approx(math.sqrt(v / (v + tau)))
        assert k < 1.0

    def test_vanishing_tau_gives_unit_factor(self):
        assert bayes_factor(0.05, 1e-4, 1e-15) == pytest.approx(1.0, abs=1e-6)

    def test_matches_density_ratio(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            d = float(rng.uniform(-0.3, 0.3))
            v = float(rng.uniform(1e-5, 1e-2))
            tau = float(rng.uniform(1e-4, 0.5))
            oracle = stats.norm.pdf(d, 0, math.sqrt(v + tau)) / stats.norm.pdf(
                d, 0, math.sqrt(v)
            )
            if oracle < 1e300:
                assert bayes_factor(d, v, tau) == pytest.approx(oracle, rel=1e-9)

    def test_strong_effect_is_significant(self):
        k = bayes_factor(0.05, 1e-4, 0.1)
        assert 1.0 / k < 0.05

    def test_increasing_in_absolute_difference(self):
        ks = [bayes_factor(d, 1e-3, 0.05) for d in (0.01, 0.05, 0.1, 0.2)]
        assert all(a < b for a, b in zip(ks, ks[1:]))

    def test_symmetric_in_sign(self):
        assert bayes_factor(0.07, 1e-3, 0.05) == bayes_factor(-0.07, 1e-3, 0.05)

    def test_degenerate_variance_errors(self):
        with pytest.raises(ValueError, match="degenerate"):
            bayes_factor(0.1, 0.0, 0.1)

    def test_saturates_instead_of_overflowing(self):
        k = bayes_factor(0.5, 1e-9, 0.1)
        assert math.isfinite(k)


def d_for_factor(k, v=1.0, tau=1.0):
    """Difference giving exactly Bayes factor k at unit variance and tau."""
    return math.sqrt((math.log(k) - 0.5 * math.log(v / (v + tau))) * 2 * v * (v + tau) / tau)


class TestUpdateComparison:
    def fresh(self):
        return ComparisonResult((0,), (0,), (1,))

    def test_factor_forty_gives_p_025(self):
        state = update_comparison(self.fresh(), d_for_factor(40.0), 1.0,
                                  TauSpec.fixed(1.0), alpha=0.05)
        assert state.bayes_factor == pytest.approx(40.0)
        assert state.p_instant == pytest.approx(0.025)
        assert state.significant

    def test_subunit_factor_clamps_to_one(self):
        state = update_comparison(self.fresh(), 0.0, 1.0, TauSpec.fixed(1.0))
        assert state.bayes_factor < 1.0
        assert state.p_instant == 1.0

    def test_running_minimum_is_sticky(self):
        state = self.fresh()
        for k in (2.0, 25.0, 10.0):
            state = update_comparison(state, d_for_factor(k), 1.0, TauSpec.fixed(1.0))
        assert state.p_min == pytest.approx(0.04)
        assert state.updates == 3


@given(st.lists(st.tuples(st.floats(-0.5, 0.5), st.floats(1e-6, 1e-2)),
                min_size=1, max_size=30))
@settings(max_examples=50, deadline=None)
def test_p_min_monotone_non_increasing(updates_seq):
    state = ComparisonResult((0,), (0,), (1,))
    last = 1.0
    for d, v in updates_seq:
        state = update_comparison(state, d, v, TauSpec.fixed(0.1))
        assert state.p_min <= last + 1e-15
        last = state.p_min


class TestRunAllComparisons:
    def test_paper_scale_result_count(self):
        spec = make_spec([4, 4], [4, 4])
        rng = np.random.default_rng(1)
        ests = [CellEstimate(float(m), 1e-4) for m in rng.uniform(0.3, 0.7, 256)]
        results = run_all_comparisons(ests, spec, TauSpec.fixed(0.1))
        assert len(results) == 1920

    def test_identical_estimates_never_significant(self):
        spec = make_spec([2, 2], [2])
        ests = [CellEstimate(0.5, 1e-4) for _ in range(spec.n_cells)]
        results = None
        for _ in range(5):
            results = run_all_comparisons(ests, spec, TauSpec.fixed(0.1), prior=results)
        assert all(not r.significant and r.p_min == 1.0 for r in results)

    def test_matches_hand_computed_factors(self):
        spec = make_spec([3], [])
        means = [0.50, 0.55, 0.40]
        var = 2e-4
        ests = [CellEstimate(m, var) for m in means]
        results = run_all_comparisons(ests, spec, TauSpec.fixed(0.1))
        pairs = enumerate_comparisons(spec)
        assert len(results) == 3
        for res, (ctx, a, b) in zip(results, pairs):
            d = means[a[0]] - means[b[0]]
            v = 2 * var
            oracle = stats.norm.pdf(d, 0, math.sqrt(v + 0.1)) / stats.norm.pdf(
                d, 0, math.sqrt(v)
            )
            assert res.bayes_factor == pytest.approx(float(oracle), rel=1e-9)

    def test_draw_based_difference_uses_draw_variance(self):
        spec = make_spec([2], [])
        rng = np.random.default_rng(2)
        base = rng.normal(0.5, 0.01, 400)
        ests = [
            CellEstimate(float(base.mean()), float(base.var(ddof=1)), base),
            CellEstimate(0.5, 1e-4, base + rng.normal(0.02, 0.005, 400)),
        ]
        (res,) = run_all_comparisons(ests, spec, TauSpec.fixed(0.1))
        diffs = ests[0].draws - ests[1].draws
        assert res.diff_mean == pytest.approx(float(diffs.mean()))
        assert res.diff_var == pytest.approx(float(diffs.var(ddof=1)))

    def test_missing_estimate_names_cell(self):
        spec = make_spec([2], [2])
        ests = [CellEstimate(0.5, 1e-4) for _ in range(4)]
        ests[2] = CellEstimate(math.nan, math.nan)
        with pytest.raises(ValueError, match="m0=m0v1, c0=c0v0"):
            run_all_comparisons(ests, spec, TauSpec.fixed(0.1))

    def test_zero_variance_pair_carried_forward(self):
        spec = make_spec([2], [])
        ests = [CellEstimate(0.0, 0.0), CellEstimate(0.0, 0.0)]
        (res,) = run_all_comparisons(ests, spec, TauSpec.fixed(0.1))
        assert res.updates == 0 and res.p_min == 1.0


def test_replay_matches_live_updates():
    rng = np.random.default_rng(3)
    d = rng.normal(0.0, 0.05, 20)
    v = rng.uniform(1e-5, 1e-3, 20)
    spec = TauSpec.dynamic()
    trace = replay_trace(d, v, spec)
    state = ComparisonResult((0,), (0,), (1,))
    for i in range(20):
        state = update_comparison(state, d[i], v[i], spec)
        assert trace[i] == pytest.approx(state.p_min)
