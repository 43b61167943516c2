import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from fairgame.core.fisher import FisherMatrix
from fairgame.core.game import (
    CharacteristicFunction,
    SolutionConcept,
    banzhaf,
    coalition,
    delta_pair,
    limiting_game,
    members,
    semivalue,
    shapley_exact,
    shapley_mc,
)
from fairgame.errors import NotPositiveDefiniteError, NumericalError, TooManyPlayersError

games = st.tuples(st.integers(2, 8), st.integers(0, 2**32 - 1))


def random_game(n, seed) -> CharacteristicFunction:
    values = np.random.default_rng(seed).normal(size=1 << n)
    values[0] = 0.0
    return CharacteristicFunction(n, values)


def additive_game(weights, noise=0.0, seed=0) -> CharacteristicFunction:
    n = len(weights)
    rng = np.random.default_rng(seed)
    return CharacteristicFunction.from_function(
        n, lambda S: sum(weights[i] for i in members(S, n)) + noise * rng.standard_normal()
    )


class TestCharacteristicFunction:
    def test_empty_coalition_must_be_zero(self):
        with pytest.raises(NumericalError, match="empty coalition"):
            CharacteristicFunction(2, [1.0, 1.0, 1.0, 2.0])

    def test_wrong_length(self):
        with pytest.raises(NumericalError):
            CharacteristicFunction(3, np.zeros(4))

    def test_coalition_helpers(self):
        assert coalition([0, 2]) == 0b101
        assert members(0b101, 3) == (0, 2)

    def test_shifted_keeps_empty_at_zero(self):
        v = random_game(3, 1).shifted(5.0)
        assert v(0) == 0.0
        assert_allclose(v.values[1:], random_game(3, 1).values[1:] + 5.0)


class TestShapleyAxioms:
    @settings(max_examples=250, deadline=None)
    @given(games)
    def test_efficiency(self, game):
        v = random_game(*game)
        assert_allclose(shapley_exact(v).values.sum(), v.grand, rtol=1e-9, atol=1e-12)

    @settings(max_examples=250, deadline=None)
    @given(games, st.randoms(use_true_random=False))
    def test_symmetry_under_relabelling(self, game, shuffle):
        v = random_game(*game)
        perm = list(range(v.n))
        shuffle.shuffle(perm)
        phi = shapley_exact(v).values
        phi_perm = shapley_exact(v.permuted(perm)).values
        assert_allclose(phi_perm[perm], phi, rtol=1e-9, atol=1e-12)

    @settings(max_examples=250, deadline=None)
    @given(games)
    def test_null_player(self, game):
        n, seed = game
        base = random_game(n, seed).values
        masks = np.arange(1 << n)
        values = base[masks & ~1]
        phi = shapley_exact(CharacteristicFunction(n, values)).values
        assert abs(phi[0]) < 1e-12

    @settings(max_examples=250, deadline=None)
    @given(games, st.floats(-3, 3))
    def test_linearity(self, game, a):
        n, seed = game
        v, w = random_game(n, seed), random_game(n, seed + 1)
        lhs = shapley_exact(v.scaled(a) + w).values
        rhs = a * shapley_exact(v).values + shapley_exact(w).values
        assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_banzhaf_equals_shapley_for_two_players(self, seed):
        v = random_game(2, seed)
        assert np.array_equal(banzhaf(v).values, shapley_exact(v).values)

    def test_symmetric_players_get_equal_values(self):
        v = CharacteristicFunction(3, [0, 1, 1, 3, 2, 4, 4, 7])
        phi = shapley_exact(v).values
        assert_allclose(phi[0], phi[1])

    def test_banzhaf_drops_efficiency(self):
        v = CharacteristicFunction(3, [0, 0, 0, 0, 0, 0, 0, 1])
        assert_allclose(banzhaf(v).values, [0.25, 0.25, 0.25])

    def test_custom_weight_table(self):
        v = random_game(3, 5)
        uniform = semivalue(v, SolutionConcept.BANZHAF, weights=lambda n: np.full(n, 0.25))
        assert_allclose(uniform.values, banzhaf(v).values)

    def test_exact_refuses_large_games(self):
        v = CharacteristicFunction(21, np.zeros(1 << 21))
        with pytest.raises(TooManyPlayersError, match="shapley_mc"):
            shapley_exact(v)


class TestShapleyMonteCarlo:
    def test_matches_exact_on_eight_players(self):
        w = np.random.default_rng(21).uniform(1, 5, size=8)
        v = additive_game(w, noise=0.1, seed=22)
        exact = shapley_exact(v).values
        est = shapley_mc(v, 200_000, seed=23)
        assert np.max(np.abs(est.values - exact)) < 0.01 * np.max(np.abs(exact))
        assert est.method == "monte_carlo"
        assert est.samples == 200_000

    def test_independent_of_worker_count(self):
        v = random_game(6, 3)
        serial = shapley_mc(v, 25_000, seed=4, n_jobs=1)
        parallel = shapley_mc(v, 25_000, seed=4, n_jobs=2)
        assert np.array_equal(serial.values, parallel.values)
        assert np.array_equal(serial.std_errors, parallel.std_errors)

    def test_error_shrinks_with_permutations(self):
        v = random_game(6, 8)
        exact = shapley_exact(v).values
        sq1 = sum(np.sum((shapley_mc(v, 2_000, seed=s).values - exact) ** 2) for s in range(10))
        sq4 = sum(np.sum((shapley_mc(v, 8_000, seed=100 + s).values - exact) ** 2) for s in range(10))
        # mean squared error scales like 1/permutations
        assert sq4 < 0.5 * sq1

    def test_single_permutation_has_no_error_bar(self):
        est = shapley_mc(random_game(3, 1), 1)
        assert np.all(np.isnan(est.std_errors))

    def test_symmetric_game_gives_equal_estimates(self):
        by_size = np.random.default_rng(31).normal(size=5)
        by_size[0] = 0.0
        v = CharacteristicFunction.from_function(4, lambda S: by_size[len(members(S, 4))])
        est = shapley_mc(v, 20_000, seed=32)
        assert_allclose(est.values.sum(), v.grand, rtol=1e-9)
        for i in range(4):
            for j in range(i + 1, 4):
                gap = abs(est.values[i] - est.values[j])
                assert gap <= 3 * math.hypot(est.std_errors[i], est.std_errors[j])

    def test_needs_a_permutation(self):
        with pytest.raises(NumericalError):
            shapley_mc(random_game(3, 1), 0)


class TestLimitingGame:
    def test_values(self):
        V = limiting_game([np.eye(2), 4 * np.eye(2)])
        assert V(0) == 0.0
        assert_allclose(V(0b01), 0.0, atol=1e-14)
        assert_allclose(V(0b10), math.log(4.0))
        assert_allclose(V(0b11), math.log(5.0))

    def test_weights_scale_fishers(self):
        V = limiting_game([FisherMatrix(np.eye(2)), FisherMatrix(np.eye(2))], weights=[4.0, 1.0])
        assert_allclose(V(0b01), math.log(4.0))

    def test_singular_coalition_is_named(self):
        with pytest.raises(NotPositiveDefiniteError) as info:
            limiting_game([np.diag([1.0, 0.0]), np.eye(2)])
        assert info.value.coalition == (0,)

    def test_isotropic_players_differ_by_log_ratio(self):
        # two players with c_i I_k: phi_1 - phi_2 = (k/2) log(c_1 / c_2)
        k = 4
        V = limiting_game([3.0 * np.eye(k), 1.5 * np.eye(k)])
        assert_allclose(delta_pair(V, 0, 1), 0.5 * k * math.log(2.0), rtol=1e-12)


class TestDeltaPair:
    def test_antisymmetric(self):
        v = random_game(4, 2)
        assert_allclose(delta_pair(v, 1, 3), -delta_pair(v, 3, 1))

    def test_bad_indices(self):
        v = random_game(3, 2)
        with pytest.raises(IndexError):
            delta_pair(v, 0, 3)
        with pytest.raises(ValueError):
            delta_pair(v, 1, 1)
