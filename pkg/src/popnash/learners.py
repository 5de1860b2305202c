"""Best-response learners: the blend update, annealing schedules, and
plateau detection."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .games import SymmetricGame, best_response, expected_utility, uniform_strategy

__all__ = [
    "AnnealSchedule",
    "PlateauConfig",
    "LearnerState",
    "make_learner",
    "learning_rate_at",
    "train_step",
    "performance",
    "record_performance",
    "is_plateaued",
]

ANNEAL_KINDS = ("constant", "inverse_time")

# perf_history capacity; PlateauConfig.window may not exceed it
HISTORY_CAP = 64


@dataclass(frozen=True)
class AnnealSchedule:
    """Learning-rate schedule: constant r0, or r0 / (1 + gamma * step)."""

    kind: str = "constant"
    r0: float = 1.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in ANNEAL_KINDS:
            raise ValueError(f"unknown anneal kind {self.kind!r}; expected {ANNEAL_KINDS}")
        if not 0.0 < self.r0 <= 1.0:
            raise ValueError(f"r0 must lie in (0, 1], got {self.r0}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


@dataclass(frozen=True)
class PlateauConfig:
    """When to call a learner converged against its current target."""

    window: int = 5
    min_improvement: float = 0.01
    eval_period: int = 10

    def __post_init__(self):
        if self.window < 2:
            raise ValueError(f"window must be >= 2, got {self.window}")
        if self.window > HISTORY_CAP:
            raise ValueError(f"window must be <= {HISTORY_CAP}, got {self.window}")
        if self.min_improvement < 0.0:
            raise ValueError("min_improvement must be >= 0")
        if self.eval_period < 1:
            raise ValueError(f"eval_period must be >= 1, got {self.eval_period}")


def learning_rate_at(schedule: AnnealSchedule, step: int) -> float:
    """Learning rate the schedule prescribes at a given step count."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    if schedule.kind == "constant":
        return schedule.r0
    return schedule.r0 / (1.0 + schedule.gamma * step)


@dataclass
class LearnerState:
    """One training worker's policy and bookkeeping."""

    policy: np.ndarray
    level: int
    schedule: AnnealSchedule
    step_count: int = 0
    perf_history: deque = field(default_factory=lambda: deque(maxlen=HISTORY_CAP))

    @property
    def learning_rate(self) -> float:
        return learning_rate_at(self.schedule, self.step_count)


def make_learner(dim: int, level: int, schedule: AnnealSchedule) -> LearnerState:
    """Fresh uniform-policy learner at the given level."""
    return LearnerState(policy=uniform_strategy(dim), level=level, schedule=schedule)


def train_step(learner: LearnerState, target, game: SymmetricGame) -> None:
    """Blend the exact best response to ``target`` into the learner's policy.

    The update is the convex combination r * onehot(BR) + (1 - r) * policy
    with r taken from the learner's schedule at its current step count, so
    the policy stays on the simplex without renormalization.
    """
    r = learning_rate_at(learner.schedule, learner.step_count)
    br = best_response(game, target)
    policy = (1.0 - r) * learner.policy
    policy[br] += r
    learner.policy = policy
    learner.step_count += 1


def performance(learner: LearnerState, target, game: SymmetricGame) -> float:
    """Expected payoff of the learner's policy against its target."""
    return expected_utility(game, learner.policy, target)


def record_performance(learner: LearnerState, perf: float) -> None:
    """Append a performance measurement tagged with the current step count."""
    learner.perf_history.append((learner.step_count, float(perf)))


def is_plateaued(learner: LearnerState, config: PlateauConfig) -> bool:
    """True once the last ``window`` measurements stopped improving.

    Improvement is the maximum of the window minus its first entry; with
    fewer than ``window`` measurements the learner is never plateaued.
    """
    if len(learner.perf_history) < config.window:
        return False
    recent = [p for _, p in list(learner.perf_history)[-config.window :]]
    return (max(recent) - recent[0]) < config.min_improvement


if __name__ == "__main__":
    from .games import canonical_game

    rps = canonical_game("rps")
    ln = make_learner(3, 1, AnnealSchedule("constant", 0.2))
    train_step(ln, uniform_strategy(3), rps)
    print(ln.policy, ln.step_count)
