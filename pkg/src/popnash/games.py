"""Symmetric zero-sum normal-form games with exact best-response oracles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SymmetricGame",
    "generate_random_game",
    "canonical_game",
    "uniform_strategy",
    "pure_strategy",
    "validate_strategy",
    "best_response",
    "best_response_value",
    "expected_utility",
    "exploitability",
]

SIMPLEX_ATOL = 1e-12


@dataclass(frozen=True)
class SymmetricGame:
    """Two-player symmetric zero-sum game in matrix form.

    ``payoffs[i, j]`` is the row player's utility when the row player picks
    pure strategy ``i`` and the column player picks ``j``.  The matrix must
    be exactly antisymmetric with a zero diagonal, which makes the game
    symmetric and zero-sum with value 0.
    """

    payoffs: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.payoffs, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"payoff matrix must be square, got shape {m.shape}")
        if m.shape[0] < 1:
            raise ValueError("payoff matrix must have at least one strategy")
        if np.any(np.diagonal(m) != 0.0):
            raise ValueError("payoff matrix diagonal must be exactly zero")
        if not np.array_equal(m, -m.T):
            raise ValueError("payoff matrix must be exactly antisymmetric")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "payoffs", m)

    @property
    def dim(self) -> int:
        return self.payoffs.shape[0]


def generate_random_game(dim: int, seed: int) -> SymmetricGame:
    """Draw a random antisymmetric game, upper triangle i.i.d. Uniform(-1, 1).

    The draw is fully determined by ``(dim, seed)``: same inputs, bit-identical
    matrix.  Exact endpoint draws are rejected and redrawn so entries lie in
    the open interval.
    """
    if dim < 1:
        raise ValueError(f"dim must be a positive integer, got {dim}")
    rng = np.random.default_rng(seed)
    n_upper = dim * (dim - 1) // 2
    draws = rng.uniform(-1.0, 1.0, size=n_upper)
    while n_upper and np.any(np.abs(draws) == 1.0):
        bad = np.abs(draws) == 1.0
        draws[bad] = rng.uniform(-1.0, 1.0, size=int(bad.sum()))
    m = np.zeros((dim, dim))
    m[np.triu_indices(dim, k=1)] = draws
    return SymmetricGame(m - m.T)


# win = 1 convention: a win pays +1, a loss -1, a tie 0
_RPS = np.array(
    [
        [0.0, -1.0, 1.0],
        [1.0, 0.0, -1.0],
        [-1.0, 1.0, 0.0],
    ]
)

# Rock-paper-scissors plus a fourth strategy that beats each of the first
# three by 2/5.  Payoff-rectified training started from Rock never discovers
# the fourth strategy, so it terminates at the exploitable RPS mixture.
_RECTIFIED_COUNTEREXAMPLE = np.array(
    [
        [0.0, -1.0, 1.0, -2.0 / 5.0],
        [1.0, 0.0, -1.0, -2.0 / 5.0],
        [-1.0, 1.0, 0.0, -2.0 / 5.0],
        [2.0 / 5.0, 2.0 / 5.0, 2.0 / 5.0, 0.0],
    ]
)

_FIXTURES = {
    "rps": _RPS,
    "rectified_counterexample": _RECTIFIED_COUNTEREXAMPLE,
}


def canonical_game(name: str) -> SymmetricGame:
    """Return a named fixture game ("rps" or "rectified_counterexample")."""
    try:
        m = _FIXTURES[name]
    except KeyError:
        raise KeyError(
            f"unknown fixture game {name!r}; known fixtures: {sorted(_FIXTURES)}"
        ) from None
    return SymmetricGame(m.copy())


def uniform_strategy(dim: int) -> np.ndarray:
    """Uniform mixture over ``dim`` pure strategies."""
    return np.full(dim, 1.0 / dim)


def pure_strategy(index: int, dim: int) -> np.ndarray:
    """One-hot vector playing pure strategy ``index``."""
    if not 0 <= index < dim:
        raise ValueError(f"pure strategy index {index} out of range for dim {dim}")
    s = np.zeros(dim)
    s[index] = 1.0
    return s


def validate_strategy(strategy: np.ndarray, dim: int | None = None) -> np.ndarray:
    """Check simplex membership (entries >= 0, sum within 1e-12 of 1)."""
    s = np.asarray(strategy, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError(f"strategy must be a vector, got shape {s.shape}")
    if dim is not None and s.shape != (dim,):
        raise ValueError(f"strategy has dim {s.shape[0]}, expected {dim}")
    if np.any(s < 0.0):
        raise ValueError("strategy has negative entries")
    total = float(s.sum())
    if abs(total - 1.0) > SIMPLEX_ATOL:
        raise ValueError(f"strategy entries sum to {total!r}, not 1")
    return s


def _as_strategy(game: SymmetricGame, strategy) -> np.ndarray:
    s = np.asarray(strategy, dtype=np.float64)
    if s.shape != (game.dim,):
        raise ValueError(
            f"strategy shape {s.shape} does not match game dim {game.dim}"
        )
    return s


def best_response(game: SymmetricGame, opponent) -> int:
    """Index of the pure strategy with maximal payoff against ``opponent``.

    Ties break deterministically toward the lowest index.
    """
    opponent = _as_strategy(game, opponent)
    return int(np.argmax(game.payoffs @ opponent))


def best_response_value(game: SymmetricGame, opponent) -> float:
    """Payoff the best pure response earns against ``opponent``."""
    opponent = _as_strategy(game, opponent)
    return float(np.max(game.payoffs @ opponent))


def expected_utility(game: SymmetricGame, row, col) -> float:
    """Row player's expected payoff when ``row`` meets ``col``."""
    row = _as_strategy(game, row)
    col = _as_strategy(game, col)
    return float(row @ (game.payoffs @ col))


def exploitability(game: SymmetricGame, strategy) -> float:
    """How much a best response gains over the game value against ``strategy``.

    For a symmetric zero-sum game this is the single-population form: the
    two-sided average over a strategy pair (sigma, sigma) collapses to the
    best-response value, and it is 0 exactly at a Nash strategy.
    """
    return best_response_value(game, strategy)


if __name__ == "__main__":
    g = canonical_game("rectified_counterexample")
    mix = np.array([1 / 3, 1 / 3, 1 / 3, 0.0])
    print("BR vs uniform RPS block:", best_response(g, mix))
    print("value:", best_response_value(g, mix))
