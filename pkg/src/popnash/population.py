"""Policy population bookkeeping: the fixed/active hierarchy and the exact
pairwise payoff table over fixed policies."""

from __future__ import annotations

import numpy as np

from .games import (
    SymmetricGame,
    pure_strategy,
    uniform_strategy,
    validate_strategy,
)
from .meta import MetaNash, SolverConfig, solve_meta_nash

__all__ = [
    "FIXED",
    "ACTIVE",
    "Population",
    "init_population",
    "save_population",
    "load_population",
    "read_checkpoint_game_desc",
    "CHECKPOINT_HEADER",
]

FIXED = "fixed"
ACTIVE = "active"

CHECKPOINT_HEADER = "popnash-population v1"


class Population:
    """Ordered collection of policies over a base game's pure strategies.

    Policies are kept in level order.  The fixed policies always occupy a
    prefix of the list (levels strictly below every active policy), and the
    payoff table caches exact pairwise expected utilities for that fixed
    prefix only; entries involving active policies are computed on demand
    from their latest published snapshots.

    Only one writer may mutate a population at a time.  Policy arrays are
    treated as immutable snapshots: training publishes a replacement vector
    instead of editing in place.
    """

    def __init__(self, base_game: SymmetricGame, initial_policy: np.ndarray):
        self.game = base_game
        initial_policy = validate_strategy(initial_policy, base_game.dim)
        self.policies: list[np.ndarray] = [initial_policy]
        self.status: list[str] = [FIXED]
        self.levels: list[int] = [0]
        self.n_fixed = 1
        self.table = np.zeros((1, 1))

    def __len__(self) -> int:
        return len(self.policies)

    # ---------- structure ----------

    def active_levels(self) -> list[int]:
        return self.levels[self.n_fixed :]

    def lowest_active_level(self) -> int:
        if self.n_fixed == len(self.policies):
            raise RuntimeError("population has no active policy")
        return self.levels[self.n_fixed]

    def add_active_policy(self, policy: np.ndarray) -> int:
        """Append ``policy`` as a new active at the next level; returns the level."""
        policy = validate_strategy(policy, self.game.dim)
        level = self.levels[-1] + 1
        self.policies.append(policy)
        self.status.append(ACTIVE)
        self.levels.append(level)
        return level

    def publish(self, index: int, policy: np.ndarray) -> None:
        """Replace the snapshot of the active policy at position ``index``."""
        if not self.n_fixed <= index < len(self.policies):
            raise ValueError(f"position {index} is not an active policy")
        policy = np.asarray(policy, dtype=np.float64)
        if policy.shape != (self.game.dim,):
            raise ValueError(
                f"policy shape {policy.shape} does not match game dim {self.game.dim}"
            )
        self.policies[index] = policy

    def promote_lowest_active(self) -> int:
        """Fix the lowest active policy and extend the payoff table.

        The new table row is computed exactly from the base game; the table
        stays antisymmetric by construction.  Returns the promoted level.
        """
        if self.n_fixed == len(self.policies):
            raise RuntimeError("population has no active policy to promote")
        k = self.n_fixed
        p = self.policies[k]
        fixed_block = np.stack(self.policies[:k])
        # u(q, p) for each fixed q; u(p, q) is its negation
        vs_new = fixed_block @ (self.game.payoffs @ p)
        table = np.zeros((k + 1, k + 1))
        table[:k, :k] = self.table
        table[:k, k] = vs_new
        table[k, :k] = -vs_new
        self.table = table
        self.status[k] = FIXED
        self.n_fixed += 1
        return self.levels[k]

    # ---------- empirical payoffs ----------

    def empirical_matrix(self, count: int | None = None) -> np.ndarray:
        """Exact antisymmetric payoff matrix over the first ``count`` policies.

        Fixed-versus-fixed entries come from the cached table; entries that
        involve active policies are recomputed from current snapshots.
        """
        k = len(self.policies) if count is None else count
        if not 1 <= k <= len(self.policies):
            raise ValueError(f"count {k} out of range for population of {len(self)}")
        stacked = np.stack(self.policies[:k])
        m = stacked @ self.game.payoffs @ stacked.T
        nf = min(self.n_fixed, k)
        m[:nf, :nf] = self.table[:nf, :nf]
        # rebuild from the upper triangle so antisymmetry is exact
        upper = np.triu(m, 1)
        return upper - upper.T

    def meta_nash_below(
        self,
        level: int,
        solver: SolverConfig = SolverConfig(),
        init_index: int = 0,
    ) -> MetaNash:
        """Meta-Nash over every policy with level strictly below ``level``.

        Weights align with the population's level order, so when ``level``
        equals the lowest active level the result depends only on fixed
        policies and their cached table.
        """
        k = sum(1 for lv in self.levels if lv < level)
        if k < 1:
            raise RuntimeError(f"no policies below level {level}")
        sub = SymmetricGame(self.empirical_matrix(k))
        return solve_meta_nash(sub, solver, init_index)

    def mixture_strategy(self, weights) -> np.ndarray:
        """Base-game mixed strategy induced by meta-Nash ``weights``.

        ``weights`` align with the first ``len(weights)`` policies in level
        order (a meta-Nash below some level always covers such a prefix).
        """
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or not 1 <= w.shape[0] <= len(self.policies):
            raise ValueError(
                f"weights of shape {w.shape} do not align with population of {len(self)}"
            )
        stacked = np.stack(self.policies[: w.shape[0]])
        return w @ stacked

    # ---------- invariant audit ----------

    def check_invariants(self) -> None:
        """Raise AssertionError if any structural invariant is violated."""
        n = len(self.policies)
        assert len(self.status) == n and len(self.levels) == n
        assert 1 <= self.n_fixed <= n
        assert all(s == FIXED for s in self.status[: self.n_fixed])
        assert all(s == ACTIVE for s in self.status[self.n_fixed :])
        assert self.levels == sorted(self.levels)
        assert len(set(self.levels)) == n
        active = self.active_levels()
        if active:
            assert max(self.levels[: self.n_fixed]) < min(active)
            assert active == list(range(active[0], active[0] + len(active)))
        assert self.table.shape == (self.n_fixed, self.n_fixed)
        assert np.array_equal(self.table, -self.table.T)
        for p in self.policies:
            validate_strategy(p, self.game.dim)


def init_population(
    base_game: SymmetricGame, init_policy: str = "uniform", seed: int = 0
) -> Population:
    """Population holding one fixed policy.

    ``init_policy`` selects it: "uniform" (default), "pure:<k>" for a fixed
    pure strategy, or "random_pure" for a seed-determined pure strategy.
    """
    dim = base_game.dim
    if init_policy == "uniform":
        p = uniform_strategy(dim)
    elif init_policy == "random_pure":
        rng = np.random.default_rng(seed)
        p = pure_strategy(int(rng.integers(dim)), dim)
    elif init_policy.startswith("pure:"):
        p = pure_strategy(int(init_policy.split(":", 1)[1]), dim)
    else:
        raise ValueError(
            f"unknown init_policy {init_policy!r}; "
            "expected 'uniform', 'random_pure', or 'pure:<k>'"
        )
    return Population(base_game, p)


# ---------- checkpoints ----------


def save_population(pop: Population, path, game_desc: str = "") -> None:
    """Write a population checkpoint as versioned plain text.

    One line per policy: status, level, then the strategy vector in full
    float precision.  The payoff table is not stored; it is recomputed
    exactly on load.
    """
    lines = [CHECKPOINT_HEADER]
    lines.append(f"game {game_desc}")
    lines.append(f"dim {pop.game.dim}")
    for p, s, lv in zip(pop.policies, pop.status, pop.levels):
        entries = " ".join(repr(float(x)) for x in p)
        lines.append(f"policy {s} {lv} {entries}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_checkpoint_game_desc(path) -> str:
    """Return the base-game description recorded in a checkpoint."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != CHECKPOINT_HEADER:
            raise ValueError(f"not a population checkpoint: header {header!r}")
        game_line = fh.readline().rstrip("\n")
    if not game_line.startswith("game "):
        raise ValueError("checkpoint missing game description line")
    return game_line[len("game ") :]


def load_population(path, base_game: SymmetricGame) -> Population:
    """Rebuild a population from a checkpoint written by save_population."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise ValueError(f"not a population checkpoint: {path}")
    dim_lines = [ln for ln in lines if ln.startswith("dim ")]
    if not dim_lines:
        raise ValueError("checkpoint missing dim line")
    dim = int(dim_lines[0].split()[1])
    if dim != base_game.dim:
        raise ValueError(
            f"checkpoint dim {dim} does not match base game dim {base_game.dim}"
        )
    policies, status, levels = [], [], []
    for ln in lines:
        if not ln.startswith("policy "):
            continue
        parts = ln.split()
        status.append(parts[1])
        levels.append(int(parts[2]))
        policies.append(np.array([float(x) for x in parts[3:]]))
    if not policies:
        raise ValueError("checkpoint contains no policies")

    pop = Population(base_game, policies[0])
    pop.policies = [validate_strategy(p, dim) for p in policies]
    pop.status = status
    pop.levels = levels
    pop.n_fixed = sum(1 for s in status if s == FIXED)
    fixed = np.stack(pop.policies[: pop.n_fixed])
    m = fixed @ base_game.payoffs @ fixed.T
    upper = np.triu(m, 1)
    pop.table = upper - upper.T
    pop.check_invariants()
    return pop


if __name__ == "__main__":
    from .games import canonical_game

    pop = init_population(canonical_game("rps"))
    pop.add_active_policy(pure_strategy(0, 3))
    pop.promote_lowest_active()
    print(pop.table)
    print(pop.meta_nash_below(2).weights)
