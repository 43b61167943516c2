import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fairgame.config import get_settings
from fairgame.core.fisher import FisherMatrix, joint_fisher
from fairgame.core.game import members, shapley_exact
from fairgame.core.gauss import BoxUniform, kl_gauss, tv_estimate_mc
from fairgame.core.inference import (
    BoxUniformPrior,
    NormalPrior,
    PlayerSample,
    build_game,
    bvm_approx,
    characteristic_value,
    coalition_fisher,
    conjugate_posterior,
    joint_mle,
    normal_prior_asymptote,
    seed_words,
    uniform_prior_asymptote,
    with_noise_estimates,
    xi,
)
from fairgame.core.players import DataSet, DirectObservationModel, LinearGaussianModel
from fairgame.errors import InsufficientDataError, MissingNoiseEstimateError, RankDeficientError
from tests.oracles import extended_kl_quad_1d


def sampled_players(models, theta, m, seed):
    rngs = [np.random.default_rng([seed, i]) for i in range(len(models))]
    return [PlayerSample(model, model.sample(theta, m, r)) for model, r in zip(models, rngs)]


def centred_direct_sample(theta, m, seed) -> PlayerSample:
    """1-d direct data whose sample mean is exactly theta."""
    z = np.random.default_rng(seed).standard_normal(m)
    model = DirectObservationModel.isotropic(1, 1.0, name="solo")
    return PlayerSample(model, DataSet("solo", theta + (z - z.mean())))


class TestPriors:
    def test_standard(self):
        prior = NormalPrior.standard(3)
        assert prior.k == 3
        assert_allclose(prior.gaussian.covariance, np.eye(3))

    def test_box(self):
        assert BoxUniformPrior(BoxUniform([0.0, 0.0], [1.0, 2.0])).k == 2


class TestConjugatePosterior:
    def test_matches_dense_formula(self, rng):
        k = 3
        theta0, cov0 = np.array([0.5, 0.0, -0.5]), np.diag([2.0, 1.0, 0.5])
        direct = DirectObservationModel(k, np.array([[1.0, 0.2, 0.0], [0.2, 1.5, 0.1], [0.0, 0.1, 0.8]]))
        linear = LinearGaussianModel(k, 0.7)
        theta = np.array([1.0, -1.0, 0.3])
        d1, d2 = direct.sample(theta, 20, rng), linear.sample(theta, 30, rng)

        noise_prec = np.linalg.inv(direct.noise_cov)
        precision = np.linalg.inv(cov0) + len(d1) * noise_prec + d2.a.T @ d2.a / 0.49
        shift = np.linalg.inv(cov0) @ theta0 + noise_prec @ d1.y.sum(axis=0) + d2.a.T @ d2.y[:, 0] / 0.49
        expected_cov = np.linalg.inv(precision)

        post = conjugate_posterior(NormalPrior(theta0, cov0), [PlayerSample(direct, d1), PlayerSample(linear, d2)])
        assert_allclose(post.covariance, expected_cov, rtol=1e-10)
        assert_allclose(post.mean, expected_cov @ shift, rtol=1e-10)

    def test_no_data_returns_prior(self):
        prior = NormalPrior(np.ones(2), 3 * np.eye(2))
        model = DirectObservationModel.isotropic(2, 1.0)
        post = conjugate_posterior(prior, [PlayerSample(model, model.empty())])
        assert post is prior.gaussian
        assert kl_gauss(post, prior.gaussian) == 0.0

    def test_precision_adds_over_disjoint_coalitions(self, synthetic_models, theta_star):
        prior = NormalPrior.standard(4)
        players = with_noise_estimates(sampled_players(synthetic_models, theta_star, 300, 5))
        S, T = players[:1], players[1:]
        joint = conjugate_posterior(prior, S + T).precision
        parts = conjugate_posterior(prior, S).precision + conjugate_posterior(prior, T).precision
        assert_allclose(joint, parts - prior.gaussian.precision, rtol=1e-10, atol=1e-10)

    def test_unknown_noise_needs_plug_in(self, theta_star):
        model = LinearGaussianModel(4, 1.1, noise_known=False)
        with pytest.raises(MissingNoiseEstimateError):
            conjugate_posterior(NormalPrior.standard(4), [PlayerSample(model, model.sample(theta_star, 10, 0))])


class TestJointMLE:
    def test_recovers_parameter(self, synthetic_models, theta_star):
        players = with_noise_estimates(sampled_players(synthetic_models, theta_star, 20_000, 4))
        assert_allclose(joint_mle(players), theta_star, atol=0.03)

    def test_rank_deficient(self, theta_star):
        model = LinearGaussianModel(4, 1.0)
        with pytest.raises(RankDeficientError):
            joint_mle([PlayerSample(model, model.sample(theta_star, 2, 0))])

    def test_empty_coalition(self):
        with pytest.raises(InsufficientDataError):
            joint_mle([])


class TestCoalitionFisher:
    def test_scales_by_smallest_count(self, theta_star):
        a = DirectObservationModel.isotropic(4, 1.0)
        b = DirectObservationModel.isotropic(4, 2.0)
        players = [PlayerSample(a, a.sample(theta_star, 100, 0)), PlayerSample(b, b.sample(theta_star, 300, 1))]
        fisher, m = coalition_fisher(players)
        assert m == 100
        assert_allclose(fisher.matrix, np.eye(4) + 3 * 0.5 * np.eye(4))

    def test_skips_empty_players(self, theta_star):
        a = DirectObservationModel.isotropic(4, 1.0)
        fisher, m = coalition_fisher([PlayerSample(a, a.sample(theta_star, 10, 0)), PlayerSample(a, a.empty())])
        assert m == 10
        assert_allclose(fisher.matrix, np.eye(4))

    def test_no_data(self):
        a = DirectObservationModel.isotropic(2, 1.0)
        with pytest.raises(InsufficientDataError):
            coalition_fisher([PlayerSample(a, a.empty())])


class TestBvM:
    def test_covariance(self):
        approx = bvm_approx(np.zeros(2), FisherMatrix(np.diag([2.0, 4.0])), m=10)
        assert_allclose(approx.covariance, np.diag([0.05, 0.025]))

    def test_needs_data(self):
        with pytest.raises(InsufficientDataError):
            bvm_approx(np.zeros(2), FisherMatrix(np.eye(2)), m=0)

    def test_close_to_exact_posterior(self, synthetic_models, theta_star):
        players = with_noise_estimates(sampled_players(synthetic_models[:2], theta_star, 5000, 2))
        exact = conjugate_posterior(NormalPrior.standard(4), players)
        fisher, m = coalition_fisher(players)
        approx = bvm_approx(joint_mle(players), fisher, m)
        assert kl_gauss(exact, approx) < 0.01

    def test_total_variation_decays(self, theta_star):
        models = [DirectObservationModel.isotropic(4, 1.0), DirectObservationModel.isotropic(4, 2.5)]
        distances = []
        for m in (16, 256, 4096):
            players = sampled_players(models, theta_star, m, 9)
            exact = conjugate_posterior(NormalPrior.standard(4), players)
            fisher, n = coalition_fisher(players)
            approx = bvm_approx(joint_mle(players), fisher, n)
            distances.append(tv_estimate_mc(exact, approx, samples=200_000, seed=m))
        assert distances[0] > distances[1] > distances[2]
        assert distances[2] < 0.05


class TestAsymptotes:
    def test_xi(self, theta_star):
        assert_allclose(xi(np.zeros(4), np.eye(4), theta_star), 0.5 * (float(theta_star @ theta_star) - 4))

    def test_xi_with_scaled_prior(self):
        assert_allclose(xi([0.0], [[4.0]], [2.0]), 0.5 * (1.0 - 1.0 + math.log(4.0)))

    def test_normal_prior_asymptote(self):
        value = normal_prior_asymptote(100, 4, 1.125, FisherMatrix(2 * np.eye(4)))
        assert_allclose(value, 2 * math.log(100) + 1.125 + 2 * math.log(2))

    def test_uniform_prior_asymptote(self):
        box = BoxUniform([0.0, 0.0], [2.0, 2.0])
        value = uniform_prior_asymptote(50, 2, box, np.eye(2))
        assert_allclose(value, math.log(50 / (2 * math.pi * math.e)) + math.log(4.0))

    def test_normal_prior_residual_decays(self, synthetic_models, theta_star):
        prior = NormalPrior.standard(4)
        fishers = [
            synthetic_models[0].analytic_fisher(),
            synthetic_models[1].analytic_fisher(),
            synthetic_models[2].analytic_fisher(1.1),
        ]
        xi_value = xi(prior.mean, prior.cov, theta_star)

        def residuals(m):
            out = np.zeros(8)
            for seed in range(10):
                players = with_noise_estimates(sampled_players(synthetic_models, theta_star, m, seed))
                game = build_game(players, prior)
                for S in range(1, 8):
                    I_S = joint_fisher([(fishers[i], 1.0) for i in members(S, 3)])
                    out[S] += abs(game(S) - normal_prior_asymptote(m, 4, xi_value, I_S)) / 10
            return out[1:]

        small, large = residuals(64), residuals(4096)
        assert np.all(large < small)

    def test_box_prior_residual_decays(self):
        prior = BoxUniformPrior(BoxUniform([0.0], [1.0]))
        residuals, errors = [], []
        for m in (64, 512, 4096):
            player = centred_direct_sample(0.05, m, seed=m)
            value = characteristic_value(1, prior, [player], seed=1, mc_samples=200_000)
            # quadrature of the same restricted integral
            exact = extended_kl_quad_1d(float(joint_mle([player])[0]), 1 / math.sqrt(m), 0.0, 1.0)
            assert abs(value.value - exact) < 5 * value.std_error + 1e-6
            asymptote = uniform_prior_asymptote(m, 1, prior.box, np.eye(1))
            residuals.append(abs(value.value - asymptote))
            errors.append(value.std_error)
        for r in range(2):
            assert residuals[r] - residuals[r + 1] > 3 * (errors[r] + errors[r + 1])


class TestBuildGame:
    def test_empty_coalition_is_zero(self, synthetic_models, theta_star):
        players = with_noise_estimates(sampled_players(synthetic_models, theta_star, 32, 0))
        game = build_game(players, NormalPrior.standard(4))
        assert game(0) == 0.0
        assert game.std_errors is None
        assert np.all(game.values[1:] > 0)

    def test_box_prior_independent_of_worker_count(self, theta_star):
        model = DirectObservationModel.isotropic(4, 1.0)
        players = sampled_players([model, model], theta_star, 200, 3)
        prior = BoxUniformPrior(BoxUniform(-5 * np.ones(4), 5 * np.ones(4)))
        serial = build_game(players, prior, seed=(7, 2), mc_samples=5000, n_jobs=1)
        parallel = build_game(players, prior, seed=(7, 2), mc_samples=5000, n_jobs=2)
        assert np.array_equal(serial.values, parallel.values)
        assert np.array_equal(serial.std_errors, parallel.std_errors)
        assert np.all(serial.std_errors[1:] > 0)

    def test_box_prior_budget_fixed_before_dispatch(self, theta_star, monkeypatch):
        model = DirectObservationModel.isotropic(4, 1.0)
        players = sampled_players([model, model], theta_star, 200, 3)
        prior = BoxUniformPrior(BoxUniform(-5 * np.ones(4), 5 * np.ones(4)))
        # workers start with the default budget and keep it
        build_game(players, prior, seed=1, n_jobs=2)
        monkeypatch.setenv("FAIRGAME_MC_SAMPLES", "5000")
        get_settings.cache_clear()
        serial = build_game(players, prior, seed=(7, 2), n_jobs=1)
        parallel = build_game(players, prior, seed=(7, 2), n_jobs=2)
        assert np.array_equal(serial.values, parallel.values)
        assert np.array_equal(serial.std_errors, parallel.std_errors)
        explicit = build_game(players, prior, seed=(7, 2), mc_samples=5000, n_jobs=1)
        assert np.array_equal(serial.values, explicit.values)

    def test_value_grows_with_data(self, synthetic_models, theta_star):
        prior = NormalPrior.standard(4)

        def mean_grand_value(m):
            return np.mean(
                [
                    build_game(with_noise_estimates(sampled_players(synthetic_models, theta_star, m, s)), prior).grand
                    for s in range(20)
                ]
            )

        assert mean_grand_value(1024) > mean_grand_value(64)

    def test_monotone_over_nested_coalitions(self, synthetic_models, theta_star):
        players = with_noise_estimates(sampled_players(synthetic_models, theta_star, 256, 4))
        game = build_game(players, NormalPrior.standard(4))
        for S in range(8):
            for i in range(3):
                assert game(S | (1 << i)) >= game(S)

    def test_duplicated_players_share_equally(self, synthetic_models, theta_star):
        model = synthetic_models[0]
        data = model.sample(theta_star, 100, 6)
        other = synthetic_models[1]
        players = [
            PlayerSample(model, data),
            PlayerSample(model, data),
            PlayerSample(other, other.sample(theta_star, 100, 7)),
        ]
        phi = shapley_exact(build_game(players, NormalPrior.standard(4))).values
        assert_allclose(phi[0], phi[1], rtol=1e-12)
        assert phi[0] != phi[2]

    def test_box_prior_seed_matters(self, theta_star):
        model = DirectObservationModel.isotropic(4, 1.0)
        players = sampled_players([model], theta_star, 200, 3)
        prior = BoxUniformPrior(BoxUniform(-5 * np.ones(4), 5 * np.ones(4)))
        a = build_game(players, prior, seed=1, mc_samples=5000, n_jobs=1)
        b = build_game(players, prior, seed=2, mc_samples=5000, n_jobs=1)
        assert a(1) != b(1)

    def test_needs_players(self):
        with pytest.raises(InsufficientDataError):
            build_game([], NormalPrior.standard(1))

    def test_seed_words(self):
        assert seed_words(5) == [5]
        assert seed_words((5, 2)) == [5, 2]


class TestNoiseEstimates:
    def test_known_players_untouched(self, synthetic_models, theta_star):
        players = sampled_players(synthetic_models, theta_star, 100, 1)
        filled = with_noise_estimates(players)
        assert filled[0] is players[0]
        assert filled[1] is players[1]
        assert filled[2].noise_sd is not None

    def test_estimate_around_common_parameter(self, synthetic_models, theta_star):
        players = sampled_players(synthetic_models, theta_star, 20_000, 1)
        filled = with_noise_estimates(players, theta_bar=theta_star)
        assert abs(filled[2].noise_sd - 1.1) < 0.03
