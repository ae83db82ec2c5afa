import math

import numpy as np
import pytest
from scipy.special import expit

from hbab.design import build_design_matrix
from hbab.estimate import (
    CellEstimate,
    hb_estimate,
    marginal_weights,
    marginalize,
    mle_estimate,
    mle_estimates,
)
from hbab.glm import CountData, fit_posterior
from hbab.sampler import Diagnostics, PosteriorSamples, SamplerConfig
from tests.test_design import make_spec


class TestMleEstimate:
    def test_basic_formula(self):
        est = mle_estimate(10, 5)
        assert (est.mean, est.variance) == (0.5, 0.025)

    def test_boundary(self):
        est = mle_estimate(10, 0)
        assert (est.mean, est.variance) == (0.0, 0.0)

    def test_larger_counts(self):
        est = mle_estimate(100, 30)
        assert est.mean == pytest.approx(0.30)
        assert est.variance == pytest.approx(0.0021)

    def test_zero_assignments_undefined(self):
        est = mle_estimate(0, 0)
        assert not est.is_defined
        assert math.isnan(est.mean)

    def test_label_swap_equivariance(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a = int(rng.integers(1, 200))
            r = int(rng.integers(0, a + 1))
            est = mle_estimate(a, r)
            flipped = mle_estimate(a, a - r)
            assert flipped.mean == pytest.approx(1.0 - est.mean)
            assert flipped.variance == pytest.approx(est.variance)

    def test_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            mle_estimate(3, 4)


def manual_samples(beta_draws, eps_draws):
    """PosteriorSamples with given flat draws (one chain)."""
    n, p = beta_draws.shape
    draws = np.concatenate(
        [beta_draws, np.zeros((n, 2)), eps_draws[:, None]], axis=1
    ).reshape(n, 1, p + 3)
    labels = tuple(f"beta[{j}]" for j in range(p)) + ("mu", "sigma", "epsilon")
    diag = Diagnostics(np.ones(p + 3), np.full(p + 3, float(n)), 0)
    return PosteriorSamples(draws, labels, diag)


class TestHbEstimate:
    def test_identical_draws_have_zero_variance(self):
        X = build_design_matrix(make_spec([2], []), interaction_order=1)
        beta = np.tile(np.array([0.2, -0.1, 0.4]), (200, 1))
        samples = manual_samples(beta, np.full(200, 0.1))
        ests = hb_estimate(samples, X)
        for k, est in enumerate(ests):
            assert est.variance == pytest.approx(0.0, abs=1e-30)
            expected = expit(X.matrix[k] @ beta[0] + 0.1)
            assert est.mean == pytest.approx(float(expected))

    def test_intercept_dominated_model_shares_estimates(self):
        # Only the intercept column varies across draws: every cell gets the
        # same pushed-forward distribution.
        X = build_design_matrix(make_spec([2], []), interaction_order=1)
        rng = np.random.default_rng(1)
        beta = np.zeros((300, 3))
        beta[:, 0] = rng.normal(0.3, 0.2, 300)
        samples = manual_samples(beta, np.zeros(300))
        ests = hb_estimate(samples, X)
        assert ests[0].mean == ests[1].mean
        assert ests[0].variance == ests[1].variance

    def test_matches_draw_level_brute_force(self):
        spec = make_spec([2, 3], [])
        X = build_design_matrix(spec, interaction_order=2)
        rng = np.random.default_rng(2)
        truth = rng.uniform(0.3, 0.7, X.rows)
        a = np.full(X.rows, 80)
        data = CountData(a, rng.binomial(a, truth))
        samples = fit_posterior(
            data, X, SamplerConfig(chains=2, warmup_draws=200, kept_draws=150, seed=3)
        )
        ests = hb_estimate(samples, X)

        flat = samples.flat()
        beta = flat[:, :X.cols]
        eps = flat[:, samples.parameter_index("epsilon")]
        for k in range(X.rows):
            rates = np.array(
                [1.0 / (1.0 + np.exp(-(X.matrix[k] @ b + e)))
                 for b, e in zip(beta, eps)]
            )
            assert ests[k].mean == pytest.approx(rates.mean(), rel=1e-12)
            assert ests[k].variance == pytest.approx(rates.var(ddof=1), rel=1e-10)

    def test_dimension_mismatch(self):
        X = build_design_matrix(make_spec([2, 2], []), interaction_order=1)
        samples = manual_samples(np.zeros((150, 3)), np.zeros(150))
        with pytest.raises(ValueError):
            hb_estimate(samples, X)


class TestMarginalize:
    def test_identical_estimates_pass_through(self):
        spec = make_spec([2], [2])
        ests = [CellEstimate(0.4, 0.01) for _ in range(4)]
        out = marginalize(ests, spec, np.array([30.0, 70.0]))
        assert all(e.mean == pytest.approx(0.4) for e in out)

    def test_weighted_mean(self):
        spec = make_spec([2], [2])
        # content combo 0: rates 0.2 / 0.6 across contexts with 75/25 traffic.
        ests = [
            CellEstimate(0.2, 0.0004),
            CellEstimate(0.6, 0.0004),
            CellEstimate(0.5, 0.0004),
            CellEstimate(0.5, 0.0004),
        ]
        out = marginalize(ests, spec, np.array([75.0, 25.0]))
        assert out[0].mean == pytest.approx(0.3)
        assert out[0].variance == pytest.approx(0.5625 * 4e-4 + 0.0625 * 4e-4)

    def test_draw_wise_matches_manual_average(self):
        spec = make_spec([2], [2, 2])
        rng = np.random.default_rng(4)
        n_draws = 500
        draws = rng.uniform(0.1, 0.9, (8, n_draws))
        ests = [CellEstimate(float(d.mean()), float(d.var(ddof=1)), d) for d in draws]
        traffic = np.array([10.0, 30.0, 25.0, 35.0])
        out = marginalize(ests, spec, traffic)
        w = traffic / traffic.sum()
        for i in range(2):
            manual = sum(w[j] * draws[4 * i + j] for j in range(4))
            assert out[i].mean == pytest.approx(float(manual.mean()), rel=1e-12)
            assert np.allclose(out[i].draws, manual)

    def test_marginal_within_context_range(self):
        spec = make_spec([2], [3])
        rng = np.random.default_rng(5)
        for _ in range(20):
            means = rng.uniform(0, 1, 6)
            ests = [CellEstimate(float(m), 0.001) for m in means]
            traffic = rng.uniform(0, 10, 3)
            if traffic.sum() == 0:
                continue
            out = marginalize(ests, spec, traffic)
            for i in range(2):
                block = means[3 * i: 3 * i + 3]
                assert block.min() - 1e-12 <= out[i].mean <= block.max() + 1e-12

    def test_no_traffic_errors(self):
        spec = make_spec([2], [2])
        ests = [CellEstimate(0.5, 0.01) for _ in range(4)]
        with pytest.raises(ValueError, match="no traffic"):
            marginalize(ests, spec, np.zeros(2))

    def test_weights_normalized(self):
        w = marginal_weights(np.array([1.0, 3.0]))
        assert np.allclose(w, [0.25, 0.75])


def test_hierarchical_estimates_shrink_under_null():
    # All true rates equal: pooling should compress the spread of the
    # hierarchical means below the plain proportions' spread.
    spec = make_spec([2, 2], [2])
    X = build_design_matrix(spec, interaction_order=2)
    rng = np.random.default_rng(6)
    a = np.full(X.rows, 40)
    data = CountData(a, rng.binomial(a, 0.5))
    samples = fit_posterior(
        data, X, SamplerConfig(chains=2, warmup_draws=250, kept_draws=200, seed=7)
    )
    hb_means = np.array([e.mean for e in hb_estimate(samples, X)])
    ml_means = np.array([e.mean for e in mle_estimates(data)])
    assert hb_means.var() < ml_means.var()
