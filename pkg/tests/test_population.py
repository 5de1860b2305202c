"""Population bookkeeping: levels, promotion, the cached payoff table,
and checkpoint serialization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from popnash.games import (
    canonical_game,
    expected_utility,
    generate_random_game,
    pure_strategy,
    uniform_strategy,
)
from popnash.meta import SolverConfig
from popnash.population import (
    Population,
    init_population,
    load_population,
    read_checkpoint_game_desc,
    save_population,
)


def fresh_rps_population():
    return Population(canonical_game("rps"), uniform_strategy(3))


def test_init_population_uniform_and_pure():
    game = canonical_game("rps")
    pop = init_population(game, "uniform", 0)
    np.testing.assert_allclose(pop.policies[0], uniform_strategy(3))
    pop = init_population(game, "pure:2", 0)
    np.testing.assert_array_equal(pop.policies[0], pure_strategy(2, 3))
    with pytest.raises(ValueError):
        init_population(game, "pure:9", 0)


def test_new_population_is_single_fixed_policy():
    pop = fresh_rps_population()
    assert len(pop) == 1
    assert pop.n_fixed == 1
    assert pop.levels == [0]
    assert pop.table.shape == (1, 1)
    pop.check_invariants()


def test_add_and_promote_assign_increasing_levels():
    pop = fresh_rps_population()
    assert pop.add_active_policy(pure_strategy(0, 3)) == 1
    assert pop.add_active_policy(pure_strategy(1, 3)) == 2
    assert pop.lowest_active_level() == 1
    assert pop.promote_lowest_active() == 1
    assert pop.n_fixed == 2
    assert pop.lowest_active_level() == 2
    pop.check_invariants()


def test_promote_without_actives_raises():
    pop = fresh_rps_population()
    with pytest.raises(RuntimeError, match="no active"):
        pop.promote_lowest_active()
    with pytest.raises(RuntimeError, match="no active"):
        pop.lowest_active_level()


def test_publish_only_touches_active_policies():
    pop = fresh_rps_population()
    pop.add_active_policy(uniform_strategy(3))
    pop.publish(1, pure_strategy(2, 3))
    np.testing.assert_array_equal(pop.policies[1], pure_strategy(2, 3))
    with pytest.raises(ValueError, match="not an active"):
        pop.publish(0, pure_strategy(0, 3))


def test_table_entries_are_exact_expected_utilities():
    game = generate_random_game(7, 2)
    pop = Population(game, uniform_strategy(7))
    rng = np.random.default_rng(0)
    for _ in range(4):
        pop.add_active_policy(rng.dirichlet(np.ones(7)))
        pop.promote_lowest_active()
    for i in range(pop.n_fixed):
        for j in range(pop.n_fixed):
            want = expected_utility(game, pop.policies[i], pop.policies[j])
            assert pop.table[i, j] == pytest.approx(want, abs=1e-12)
    assert np.array_equal(pop.table, -pop.table.T)


def test_empirical_matrix_mixes_cached_and_live_entries():
    game = canonical_game("rps")
    pop = Population(game, pure_strategy(0, 3))
    pop.add_active_policy(pure_strategy(1, 3))
    m = pop.empirical_matrix()
    assert m.shape == (2, 2)
    assert m[1, 0] == 1.0  # paper beats rock
    assert np.array_equal(m, -m.T)
    with pytest.raises(ValueError, match="out of range"):
        pop.empirical_matrix(3)


def test_meta_nash_below_covers_only_lower_levels():
    game = canonical_game("rps")
    pop = Population(game, pure_strategy(0, 3))
    pop.add_active_policy(pure_strategy(1, 3))
    meta = pop.meta_nash_below(1, SolverConfig(max_iters=200, target_residual=1e-9))
    np.testing.assert_array_equal(meta.weights, [1.0])
    with pytest.raises(RuntimeError, match="below"):
        pop.meta_nash_below(0)


def test_mixture_strategy_weights_prefix():
    pop = fresh_rps_population()
    pop.add_active_policy(pure_strategy(0, 3))
    mix = pop.mixture_strategy(np.array([0.5, 0.5]))
    np.testing.assert_allclose(mix, [0.5 + 1 / 6, 1 / 6, 1 / 6])
    with pytest.raises(ValueError, match="align"):
        pop.mixture_strategy(np.zeros(3))


def test_checkpoint_roundtrip(tmp_path):
    game = generate_random_game(5, 9)
    pop = Population(game, uniform_strategy(5))
    pop.add_active_policy(pure_strategy(3, 5))
    pop.promote_lowest_active()
    pop.add_active_policy(pure_strategy(1, 5))
    path = tmp_path / "pop.json"
    save_population(pop, path, game_desc="random d5 seed 9")
    assert read_checkpoint_game_desc(path) == "random d5 seed 9"
    back = load_population(path, game)
    assert len(back) == len(pop)
    assert back.n_fixed == pop.n_fixed
    assert back.levels == pop.levels
    for mine, theirs in zip(pop.policies, back.policies):
        np.testing.assert_array_equal(mine, theirs)
    # the table is recomputed on load; matmul order may differ by an ulp
    np.testing.assert_allclose(back.table, pop.table, atol=1e-14)
    back.check_invariants()


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_random_operation_sequences_keep_invariants(data):
    game = generate_random_game(4, data.draw(st.integers(0, 999)))
    pop = Population(game, uniform_strategy(4))
    rng = np.random.default_rng(data.draw(st.integers(0, 999)))
    ops = data.draw(
        st.lists(st.sampled_from(["add", "promote", "publish"]), min_size=1, max_size=12)
    )
    for op in ops:
        if op == "add":
            pop.add_active_policy(rng.dirichlet(np.ones(4)))
        elif op == "promote" and pop.n_fixed < len(pop):
            pop.promote_lowest_active()
        elif op == "publish" and pop.n_fixed < len(pop):
            idx = int(rng.integers(pop.n_fixed, len(pop)))
            pop.publish(idx, rng.dirichlet(np.ones(4)))
        pop.check_invariants()
    # fixed policies always occupy the level prefix
    assert pop.levels[: pop.n_fixed] == sorted(pop.levels[: pop.n_fixed])
    if pop.n_fixed < len(pop):
        assert max(pop.levels[: pop.n_fixed]) < min(pop.active_levels())
