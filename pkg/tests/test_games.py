"""Game construction, fixtures, and the exact best-response oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from popnash.games import (
    SymmetricGame,
    best_response,
    best_response_value,
    canonical_game,
    expected_utility,
    exploitability,
    generate_random_game,
    pure_strategy,
    uniform_strategy,
    validate_strategy,
)

RPS = np.array(
    [
        [0.0, -1.0, 1.0],
        [1.0, 0.0, -1.0],
        [-1.0, 1.0, 0.0],
    ]
)


def test_rps_fixture_matches_win_one_convention():
    game = canonical_game("rps")
    np.testing.assert_array_equal(game.payoffs, RPS)


def test_counterexample_fixture_shape():
    game = canonical_game("rectified_counterexample")
    assert game.dim == 4
    np.testing.assert_array_equal(game.payoffs[:3, :3], RPS)
    # the fourth strategy beats each of the first three by the same margin
    np.testing.assert_allclose(game.payoffs[3, :3], 0.4)


def test_unknown_fixture_name_lists_known_ones():
    with pytest.raises(KeyError, match="rps"):
        canonical_game("matching_pennies")


def test_constructor_rejects_nonsquare():
    with pytest.raises(ValueError, match="square"):
        SymmetricGame(np.zeros((2, 3)))


def test_constructor_rejects_nonzero_diagonal():
    m = np.array([[0.5]])
    with pytest.raises(ValueError, match="diagonal"):
        SymmetricGame(m)


def test_constructor_rejects_symmetric_matrix():
    m = np.array([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(ValueError, match="antisymmetric"):
        SymmetricGame(m)


def test_payoffs_are_frozen():
    game = canonical_game("rps")
    with pytest.raises(ValueError):
        game.payoffs[0, 1] = 5.0


def test_random_game_deterministic_per_seed():
    a = generate_random_game(12, 7)
    b = generate_random_game(12, 7)
    assert a.payoffs.tobytes() == b.payoffs.tobytes()
    c = generate_random_game(12, 8)
    assert a.payoffs.tobytes() != c.payoffs.tobytes()


def test_random_game_entries_in_open_interval():
    game = generate_random_game(40, 3)
    off_diag = game.payoffs[~np.eye(40, dtype=bool)]
    assert np.all(np.abs(off_diag) < 1.0)
    assert np.all(np.abs(off_diag) > 0.0)


def test_random_game_rejects_bad_dim():
    with pytest.raises(ValueError, match="positive"):
        generate_random_game(0, 1)


def test_uniform_and_pure_strategies():
    np.testing.assert_allclose(uniform_strategy(4), [0.25, 0.25, 0.25, 0.25])
    np.testing.assert_array_equal(pure_strategy(2, 4), [0.0, 0.0, 1.0, 0.0])
    with pytest.raises(ValueError, match="out of range"):
        pure_strategy(4, 4)


def test_validate_strategy_rejects_off_simplex():
    with pytest.raises(ValueError, match="negative"):
        validate_strategy(np.array([1.5, -0.5]))
    with pytest.raises(ValueError, match="sum"):
        validate_strategy(np.array([0.5, 0.4]))
    with pytest.raises(ValueError, match="vector"):
        validate_strategy(np.eye(2))
    with pytest.raises(ValueError, match="expected 3"):
        validate_strategy(np.array([0.5, 0.5]), dim=3)


def test_best_response_breaks_ties_low():
    game = canonical_game("rps")
    # against uniform every pure strategy earns exactly 0
    assert best_response(game, uniform_strategy(3)) == 0


def test_best_response_to_pure_scissors_is_rock():
    game = canonical_game("rps")
    assert best_response(game, pure_strategy(2, 3)) == 0
    assert best_response_value(game, pure_strategy(2, 3)) == 1.0


def test_expected_utility_is_bilinear_form():
    game = canonical_game("rps")
    # paper vs rock wins outright
    assert expected_utility(game, pure_strategy(1, 3), pure_strategy(0, 3)) == 1.0
    # mixing half rock half paper against scissors: 0.5 * 1 + 0.5 * (-1)
    half = np.array([0.5, 0.5, 0.0])
    assert expected_utility(game, half, pure_strategy(2, 3)) == 0.0


def test_exploitability_zero_at_uniform_rps():
    game = canonical_game("rps")
    assert exploitability(game, uniform_strategy(3)) == 0.0
    assert exploitability(game, pure_strategy(0, 3)) == 1.0


def test_counterexample_rps_mixture_exploitable_by_two_fifths():
    game = canonical_game("rectified_counterexample")
    mix = np.array([1 / 3, 1 / 3, 1 / 3, 0.0])
    assert best_response(game, mix) == 3
    assert abs(exploitability(game, mix) - 0.4) < 1e-12


def test_strategy_shape_mismatch_raises():
    game = canonical_game("rps")
    with pytest.raises(ValueError, match="does not match"):
        best_response(game, uniform_strategy(4))


@settings(max_examples=200, deadline=None)
@given(dim=st.integers(min_value=1, max_value=20), seed=st.integers(0, 10_000))
def test_random_games_exactly_antisymmetric(dim, seed):
    game = generate_random_game(dim, seed)
    m = game.payoffs
    assert np.array_equal(m, -m.T)
    assert np.all(np.diagonal(m) == 0.0)


@settings(max_examples=200, deadline=None)
@given(dim=st.integers(min_value=2, max_value=15), seed=st.integers(0, 10_000))
def test_best_response_attains_the_maximum(dim, seed):
    game = generate_random_game(dim, seed)
    rng = np.random.default_rng(seed + 1)
    opp = rng.dirichlet(np.ones(dim))
    idx = best_response(game, opp)
    payoffs = game.payoffs @ opp
    assert payoffs[idx] == payoffs.max()
    assert best_response_value(game, opp) == payoffs.max()
