"""Meta-game solving: fictitious play, refinement, support extraction,
the least-exploitable mixture, and the exhaustive support check."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from popnash.games import (
    SymmetricGame,
    canonical_game,
    generate_random_game,
    pure_strategy,
)
from popnash.meta import (
    MAX_CHECK_DIM,
    MetaNash,
    SolverConfig,
    check_support_theorem,
    extract_support,
    fictitious_play,
    least_exploitable_mixture,
    restricted_game,
    solve_meta_nash,
)


def test_solver_config_validation():
    with pytest.raises(ValueError, match="max_iters"):
        SolverConfig(max_iters=0)
    with pytest.raises(ValueError, match="target_residual"):
        SolverConfig(target_residual=-1.0)


def test_fictitious_play_residual_is_self_consistent():
    game = generate_random_game(8, 0)
    meta = fictitious_play(game, 500, target_residual=0.0)
    assert meta.residual == pytest.approx(float(np.max(game.payoffs @ meta.weights)), abs=0)
    assert meta.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(meta.weights >= 0.0)


def test_fictitious_play_best_iterate_never_worse_with_budget():
    game = generate_random_game(9, 4)
    residuals = [fictitious_play(game, n, target_residual=0.0).residual for n in (50, 200, 1000)]
    assert residuals[0] >= residuals[1] >= residuals[2]


def test_solve_rps_exactly_uniform():
    meta = solve_meta_nash(canonical_game("rps"), SolverConfig(max_iters=2000, target_residual=1e-9))
    np.testing.assert_allclose(meta.weights, [1 / 3, 1 / 3, 1 / 3], atol=1e-12)
    assert meta.residual <= 1e-12


def test_solve_dominant_strategy_game():
    # strategy 0 beats strategy 1 outright, so the equilibrium is pure
    game = SymmetricGame(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    meta = solve_meta_nash(game, SolverConfig(max_iters=500, target_residual=1e-9))
    np.testing.assert_allclose(meta.weights, [1.0, 0.0], atol=1e-12)
    assert meta.residual == 0.0


def test_solve_collapses_duplicate_strategies_onto_first_copy():
    rps = canonical_game("rps").payoffs
    m = np.zeros((4, 4))
    m[:3, :3] = rps
    m[3, 1:3] = rps[0, 1:3]
    m[1:3, 3] = rps[1:3, 0]
    game = SymmetricGame(m)  # strategy 3 plays exactly like rock
    meta = solve_meta_nash(game, SolverConfig(max_iters=4000, target_residual=1e-9))
    np.testing.assert_allclose(meta.weights, [1 / 3, 1 / 3, 1 / 3, 0.0], atol=1e-9)
    assert meta.residual <= 1e-12


def test_solve_is_deterministic_and_cached():
    game = generate_random_game(10, 5)
    cfg = SolverConfig(max_iters=3000, target_residual=1e-9)
    a = solve_meta_nash(game, cfg)
    b = solve_meta_nash(game, cfg)
    assert a.weights.tobytes() == b.weights.tobytes()
    assert a.residual == b.residual
    with pytest.raises(ValueError):
        a.weights[0] = 0.5  # cached result must be read-only


def test_solve_respects_init_index():
    game = canonical_game("rps")
    cfg = SolverConfig(max_iters=2000, target_residual=1e-9)
    for init in range(3):
        meta = solve_meta_nash(game, cfg, init_index=init)
        np.testing.assert_allclose(meta.weights, [1 / 3, 1 / 3, 1 / 3], atol=1e-12)


def test_refinement_never_hurts_the_raw_average():
    for seed in range(12):
        game = generate_random_game(11, seed)
        raw = fictitious_play(game, 2000, target_residual=0.0)
        refined = solve_meta_nash(game, SolverConfig(max_iters=2000, target_residual=0.0))
        assert refined.residual <= raw.residual + 1e-15


def test_restricted_game_subsets_and_errors():
    game = canonical_game("rps")
    sub = restricted_game(game, [0, 2])
    np.testing.assert_array_equal(sub.payoffs, [[0.0, 1.0], [-1.0, 0.0]])
    with pytest.raises(IndexError, match="at least one"):
        restricted_game(game, [])
    with pytest.raises(IndexError, match="duplicates"):
        restricted_game(game, [1, 1])
    with pytest.raises(IndexError, match="out of range"):
        restricted_game(game, [0, 3])


def test_extract_support_thresholding():
    s = np.array([0.5, 0.02, 0.48, 0.0])
    assert extract_support(s, 0.05).indices == frozenset({0, 2})
    assert extract_support(s, 0.0).indices == frozenset({0, 1, 2})
    with pytest.raises(ValueError, match="threshold"):
        extract_support(s, 1.0)


def test_least_exploitable_mixture_rock_paper_only():
    # over {rock, paper} the best mixture is (1/3, 2/3): scissors then gains
    # only 1/3, matching what paper alone concedes to scissors twice over
    game = canonical_game("rps")
    weights, upper, lower = least_exploitable_mixture(
        game, [pure_strategy(0, 3), pure_strategy(1, 3)]
    )
    np.testing.assert_allclose(weights, [1 / 3, 2 / 3], atol=2e-3)
    assert abs(upper - 1 / 3) < 2e-3
    assert lower <= 1 / 3 + 1e-9
    assert upper >= lower


def test_least_exploitable_mixture_shrinks_with_more_policies():
    game = canonical_game("rps")
    pols = [pure_strategy(i, 3) for i in range(3)]
    _, upper_two, _ = least_exploitable_mixture(game, pols[:2])
    _, upper_three, lower_three = least_exploitable_mixture(game, pols)
    assert upper_three <= upper_two + 1e-9
    assert abs(upper_three) < 1e-3
    assert lower_three <= upper_three


def test_support_theorem_on_rps():
    report = check_support_theorem(canonical_game("rps"))
    assert report.holds and not report.unresolved
    assert report.support == (0, 1, 2)
    assert report.subsets_checked == 6
    assert report.failures == ()


def test_support_theorem_on_random_game():
    report = check_support_theorem(generate_random_game(6, 11))
    assert report.holds and not report.unresolved
    assert report.support == (1, 3, 5)
    assert report.subsets_checked == 55


def test_support_theorem_rejects_large_dims():
    with pytest.raises(ValueError, match=str(MAX_CHECK_DIM)):
        check_support_theorem(generate_random_game(MAX_CHECK_DIM + 1, 0))


@settings(max_examples=150, deadline=None)
@given(dim=st.integers(min_value=2, max_value=10), seed=st.integers(0, 5000))
def test_solved_weights_stay_on_the_simplex(dim, seed):
    game = generate_random_game(dim, seed)
    meta = solve_meta_nash(game, SolverConfig(max_iters=800, target_residual=1e-6))
    assert np.all(meta.weights >= 0.0)
    assert meta.weights.sum() == pytest.approx(1.0, abs=1e-9)
    assert meta.residual == pytest.approx(float(np.max(game.payoffs @ meta.weights)), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2000))
def test_equilibrium_residual_is_nonnegative(seed):
    # w' G w = 0 for antisymmetric G, so the best response always gets >= 0
    game = generate_random_game(7, seed)
    meta = solve_meta_nash(game, SolverConfig(max_iters=1500, target_residual=1e-9))
    assert meta.residual >= -1e-15


def test_meta_nash_is_frozen_record():
    meta = MetaNash(np.array([1.0]), 0.0, 3)
    with pytest.raises(AttributeError):
        meta.residual = 1.0
