import numpy as np
import pytest

from hbab.conjugate import (
    ConjugateInstance,
    estimator_mean,
    posterior,
    quadrature_posterior,
    shrinkage_coefficients,
    simulate_estimator_moments,
    variance_upper_bound,
)


def random_instance(rng, n_cells=None):
    n = n_cells or rng.integers(1, 6)
    return ConjugateInstance(
        y_bar=rng.uniform(-2.0, 2.0, n),
        s_sq=rng.uniform(0.05, 2.0, n),
        sigma_beta_sq=float(rng.uniform(0.1, 4.0)),
        sigma_mu_sq=float(rng.uniform(0.1, 4.0)),
    )


class TestPosterior:
    def test_no_pooling_limit(self):
        # Diffuse effect prior: posterior mean collapses to the data.
        rng = np.random.default_rng(1)
        inst = ConjugateInstance(
            y_bar=rng.uniform(-2, 2, 4),
            s_sq=rng.uniform(0.1, 1.0, 4),
            sigma_beta_sq=1e12,
            sigma_mu_sq=1.0,
        )
        post = posterior(inst)
        assert np.allclose(post.beta_hat, inst.y_bar, atol=1e-4)

    def test_precise_data_dominates(self):
        inst = ConjugateInstance(
            y_bar=np.array([1.5, -0.5, 0.2]),
            s_sq=np.array([1e-12, 0.5, 0.5]),
            sigma_beta_sq=1.0,
            sigma_mu_sq=1.0,
        )
        post = posterior(inst)
        assert abs(post.beta_hat[0] - 1.5) < 1e-6

    def test_matches_quadrature_on_random_instances(self):
        rng = np.random.default_rng(20240501)
        for _ in range(50):
            inst = random_instance(rng)
            post = posterior(inst)
            q_mean, q_var = quadrature_posterior(inst)
            assert np.max(np.abs(post.beta_hat - q_mean)) < 1e-6
            assert np.max(np.abs(post.sigma_hat_sq - q_var)) < 1e-6

    def test_posterior_variance_below_data_variance(self):
        # Pooling is informative, so the posterior is tighter than the data.
        rng = np.random.default_rng(7)
        for _ in range(20):
            inst = random_instance(rng)
            post = posterior(inst)
            assert np.all(post.sigma_hat_sq < inst.s_sq)

    def test_validation(self):
        with pytest.raises(ValueError):
            ConjugateInstance(np.array([0.0]), np.array([0.0]), 1.0, 1.0)
        with pytest.raises(ValueError):
            ConjugateInstance(np.array([0.0]), np.array([1.0]), -1.0, 1.0)


class TestEstimatorMean:
    def test_zero_truth_maps_to_zero(self):
        rng = np.random.default_rng(3)
        inst = random_instance(rng, 4)
        assert np.allclose(estimator_mean(np.zeros(4), inst), 0.0)

    def test_unbiased_in_diffuse_limit(self):
        beta = np.array([0.4, -1.0, 0.7])
        inst = ConjugateInstance(
            y_bar=np.zeros(3), s_sq=np.full(3, 0.3), sigma_beta_sq=1e12, sigma_mu_sq=1.0
        )
        assert np.allclose(estimator_mean(beta, inst), beta, atol=1e-4)

    def test_matches_monte_carlo(self):
        rng = np.random.default_rng(11)
        inst = random_instance(rng, 4)
        beta = rng.uniform(-1, 1, 4)
        mc_mean, _, se = simulate_estimator_moments(beta, inst, n_reps=100_000, seed=5)
        assert np.all(np.abs(estimator_mean(beta, inst) - mc_mean) <= 3 * se)


class TestVarianceBound:
    def test_monte_carlo_var_below_bound(self):
        rng = np.random.default_rng(13)
        for seed in range(3):
            inst = random_instance(rng, 4)
            beta = rng.uniform(-1, 1, 4)
            _, mc_var, _ = simulate_estimator_moments(beta, inst, 100_000, seed=seed)
            assert np.all(mc_var <= variance_upper_bound(inst))

    def test_single_cell_small_mean_prior(self):
        # With the shared-mean prior pinned near zero the third term vanishes.
        inst = ConjugateInstance(
            y_bar=np.array([0.3]), s_sq=np.array([0.5]),
            sigma_beta_sq=1.0, sigma_mu_sq=1e-9,
        )
        s, sb2 = 0.5, 1.0
        first_two = s / (1 + s / sb2) ** 2 + 2 * sb2 / (1 + sb2 / s) ** 2
        assert variance_upper_bound(inst)[0] == pytest.approx(first_two, rel=1e-6)

    def test_vanishes_with_perfect_data(self):
        inst = ConjugateInstance(
            y_bar=np.array([0.3, 0.1]), s_sq=np.array([1e-10, 0.5]),
            sigma_beta_sq=1.0, sigma_mu_sq=1.0,
        )
        assert variance_upper_bound(inst)[0] < 1e-9


class TestShrinkageCoefficients:
    def test_bound_below_mle_variance_at_h10(self):
        assert shrinkage_coefficients(10.0, 1.0).c1 < 1.0

    def test_c1_decays_like_one_over_h(self):
        for h in (1e2, 1e3, 1e4):
            assert shrinkage_coefficients(h, 1.0).c1 * h < 3.0

    def test_c2_stays_order_one(self):
        for h in (1e2, 1e3, 1e4):
            c2 = shrinkage_coefficients(h, 1.0).c2
            assert 0.9 < c2 < 1.1

    def test_rejects_nonpositive_h(self):
        with pytest.raises(ValueError):
            shrinkage_coefficients(0.0, 1.0)

    def test_variance_gain_under_precision_gap(self):
        # One noisy cell among precisely measured ones: empirical variance
        # stays below c1(h) * s_f^2.
        rng = np.random.default_rng(17)
        h, c = 10.0, 1.0
        sb2 = 1.0
        for seed in range(3):
            n = int(rng.integers(3, 6))
            s_sq = np.concatenate([[h * sb2], rng.uniform(0.01, 1.0 / h, n - 1)])
            inst = ConjugateInstance(
                y_bar=np.zeros(n), s_sq=s_sq,
                sigma_beta_sq=sb2, sigma_mu_sq=float(rng.uniform(0.1, c)),
            )
            beta = rng.uniform(-1, 1, n)
            _, mc_var, _ = simulate_estimator_moments(beta, inst, 100_000, seed=seed)
            assert mc_var[0] <= shrinkage_coefficients(h, c).c1 * s_sq[0]
