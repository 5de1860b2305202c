"""Population-based training loops sharing one best-response worker model.

Every algorithm here advances in rounds: each configured worker takes one
smoothed best-response step per round, so a step budget divides evenly
into rounds and traces from different algorithms line up on the same
grid.  The algorithms differ only in how workers map onto the population
(a pipeline of levels, a flat pool, a fixed hierarchy, per-generation
rectified targets) and in when a worker's policy gets frozen.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .games import SymmetricGame, best_response_value, uniform_strategy
from .learners import (
    AnnealSchedule,
    LearnerState,
    PlateauConfig,
    is_plateaued,
    make_learner,
    performance,
    record_performance,
    train_step,
)
from .meta import SolverConfig, solve_meta_nash
from .population import Population, init_population
from .traces import ExploitabilityTrace, TraceRecord

ALGORITHMS = (
    "sequential_psro",
    "naive_psro",
    "p2sro",
    "dch",
    "rectified_psro",
    "self_play",
)

SCHEDULER_MODES = ("lockstep", "threaded")

# Algorithms whose workers genuinely run concurrently; the rest are
# inherently serial and ignore the worker count.
_PARALLEL = ("naive_psro", "p2sro", "dch", "rectified_psro")
_THREADABLE = ("naive_psro", "p2sro", "dch")

# Two policies closer than this in sup norm count as the same strategy
# when rectified training decides whether a candidate is new.
DUPLICATE_ATOL = 1e-9


@dataclass(frozen=True)
class SchedulerConfig:
    """How many workers advance per round and when evaluation happens."""

    workers: int = 1
    mode: str = "lockstep"
    meta_refresh_period: int = 10
    max_steps: int = 10_000
    eval_every: int = 10
    eval_fixed_only: bool = False
    randomize_meta_init: bool = False
    # Threaded mode only: pause per worker step.  Exact oracle steps run
    # in microseconds, so unthrottled workers exhaust any budget before
    # the coordinator can promote or refresh even once; the throttle
    # stands in for the training time of a real best-response worker.
    worker_step_delay: float = 2e-4

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if self.mode not in SCHEDULER_MODES:
            raise ValueError(f"mode must be one of {SCHEDULER_MODES}, got {self.mode!r}")
        if self.meta_refresh_period < 1:
            raise ValueError("meta_refresh_period must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.worker_step_delay < 0:
            raise ValueError("worker_step_delay must be >= 0")


@dataclass
class RunState:
    """Mutable state threaded through the round functions of one run."""

    game: SymmetricGame
    algorithm: str
    scheduler: SchedulerConfig
    plateau: PlateauConfig
    anneal: AnnealSchedule
    solver: SolverConfig
    population: Population
    rng: np.random.Generator
    seed: int = 0
    learners: list[LearnerState] = field(default_factory=list)
    targets: list[np.ndarray] = field(default_factory=list)
    round: int = 0
    global_step: int = 0
    records: list[TraceRecord] = field(default_factory=list)
    finished: bool = False
    # Rectified bookkeeping: population indices added per generation.
    generation_log: list[list[int]] = field(default_factory=list)

    @property
    def promotions(self) -> int:
        """How many policies have been frozen beyond the initial one."""
        return self.population.n_fixed - 1


def effective_workers(algorithm: str, workers: int) -> int:
    """Workers that actually step each round for ``algorithm``."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return workers if algorithm in _PARALLEL else 1


def init_run(
    game: SymmetricGame,
    algorithm: str,
    scheduler: SchedulerConfig = SchedulerConfig(),
    plateau: PlateauConfig = PlateauConfig(),
    anneal: AnnealSchedule = AnnealSchedule(),
    solver: SolverConfig = SolverConfig(),
    seed: int = 0,
    init_policy: str = "uniform",
) -> RunState:
    """Build the population, learners and first targets for one run."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}, expected one of {ALGORITHMS}")
    pop = init_population(game, init_policy, seed)
    state = RunState(
        game=game,
        algorithm=algorithm,
        scheduler=scheduler,
        plateau=plateau,
        anneal=anneal,
        solver=solver,
        population=pop,
        rng=np.random.default_rng(seed),
        seed=seed,
    )
    dim = game.dim
    n_workers = effective_workers(algorithm, scheduler.workers)
    if algorithm == "rectified_psro":
        # Workers are spawned per generation, one per rectified target.
        return state
    for _ in range(n_workers):
        level = pop.add_active_policy(uniform_strategy(dim))
        state.learners.append(make_learner(dim, level, anneal))
    state.targets = [None] * len(state.learners)
    refresh_targets(state)
    return state


def _meta_init(state: RunState, population_size: int) -> int:
    """Fictitious-play start index for a meta solve over that many policies."""
    if state.scheduler.randomize_meta_init and population_size > 1:
        return int(state.rng.integers(population_size))
    return 0


def refresh_targets(state: RunState) -> None:
    """Recompute each learner's training target from the current population.

    Pipeline-style algorithms give every learner the meta-Nash mixture of
    all policies below its own level; the flat variants share one mixture
    over the fixed policies; self-play tracks the latest frozen snapshot.
    Rectified targets are fixed at generation start and never refreshed.
    """
    pop = state.population
    alg = state.algorithm
    if alg in ("p2sro", "dch"):
        for i, learner in enumerate(state.learners):
            below = sum(1 for lv in pop.levels if lv < learner.level)
            meta = pop.meta_nash_below(learner.level, state.solver, _meta_init(state, below))
            state.targets[i] = pop.mixture_strategy(meta.weights)
    elif alg in ("naive_psro", "sequential_psro"):
        lowest = pop.lowest_active_level()
        meta = pop.meta_nash_below(lowest, state.solver, _meta_init(state, pop.n_fixed))
        target = pop.mixture_strategy(meta.weights)
        state.targets = [target] * len(state.learners)
    elif alg == "self_play":
        state.targets = [pop.policies[pop.n_fixed - 1]]
    elif alg == "rectified_psro":
        pass
    else:  # pragma: no cover - init_run rejects unknown names
        raise ValueError(f"unknown algorithm {alg!r}")


def _step_workers(state: RunState) -> None:
    """Advance every learner one train step and publish the new policies."""
    pop = state.population
    for i, learner in enumerate(state.learners):
        target = state.targets[i]
        train_step(learner, target, state.game)
        if state.algorithm != "rectified_psro":
            pop.publish(pop.n_fixed + i, learner.policy)
        state.global_step += 1
        if learner.step_count % state.plateau.eval_period == 0:
            record_performance(learner, performance(learner, target, state.game))


def _clear_histories(state: RunState) -> None:
    for learner in state.learners:
        learner.perf_history.clear()


def _promote_pipeline_lowest(state: RunState) -> None:
    """Freeze the lowest active policy and open a fresh top level.

    Performance histories restart afterwards because every learner's
    target is about to change; stale windows would otherwise trigger
    immediate plateaus against the new, harder mixtures.
    """
    pop = state.population
    dim = state.game.dim
    pop.promote_lowest_active()
    new_level = pop.add_active_policy(uniform_strategy(dim))
    state.learners.pop(0)
    state.learners.append(make_learner(dim, new_level, state.anneal))
    state.targets = [None] * len(state.learners)


def _promote_flat_worker(state: RunState, worker: int) -> None:
    """Freeze ``worker``'s policy in a flat pool and reset that worker.

    The population's promotion primitive always freezes its lowest
    active slot, so the plateaued policy is first written into that slot
    and every worker's policy is re-published afterwards to keep slot
    contents aligned with the (unchanged) worker order.
    """
    pop = state.population
    dim = state.game.dim
    pop.publish(pop.n_fixed, state.learners[worker].policy)
    pop.promote_lowest_active()
    new_level = pop.add_active_policy(uniform_strategy(dim))
    state.learners[worker] = make_learner(dim, new_level, state.anneal)
    for i, learner in enumerate(state.learners):
        learner.level = pop.levels[pop.n_fixed + i]
        pop.publish(pop.n_fixed + i, learner.policy)
    state.targets = [None] * len(state.learners)


def p2sro_round(state: RunState) -> None:
    """One pipeline round: step all levels, promote the lowest if flat."""
    if state.round % state.scheduler.meta_refresh_period == 0:
        refresh_targets(state)
    _step_workers(state)
    if is_plateaued(state.learners[0], state.plateau):
        _promote_pipeline_lowest(state)
        refresh_targets(state)
        _clear_histories(state)
    state.round += 1


def dch_round(state: RunState) -> None:
    """One fixed-hierarchy round: like the pipeline but nothing promotes."""
    if state.round % state.scheduler.meta_refresh_period == 0:
        refresh_targets(state)
    _step_workers(state)
    state.round += 1


def naive_round(state: RunState) -> None:
    """One flat-pool round: all workers chase the same fixed-set mixture.

    When several workers plateau in the same round only the lowest index
    promotes; the rest keep training against the refreshed target.
    """
    if state.round % state.scheduler.meta_refresh_period == 0:
        refresh_targets(state)
    _step_workers(state)
    for i, learner in enumerate(state.learners):
        if is_plateaued(learner, state.plateau):
            _promote_flat_worker(state, i)
            refresh_targets(state)
            _clear_histories(state)
            break
    state.round += 1


def sequential_round(state: RunState) -> None:
    """One double-oracle round: a single worker, frozen when it plateaus."""
    naive_round(state)


def self_play_round(state: RunState) -> None:
    """One self-play round: snapshot on plateau, keep training in place.

    The learner is never reset, so each frozen snapshot is just a copy of
    the continuing policy and the target is always the latest snapshot.
    """
    if state.round % state.scheduler.meta_refresh_period == 0:
        refresh_targets(state)
    _step_workers(state)
    learner = state.learners[0]
    if is_plateaued(learner, state.plateau):
        pop = state.population
        pop.publish(pop.n_fixed, learner.policy)
        pop.promote_lowest_active()
        new_level = pop.add_active_policy(learner.policy)
        learner.level = new_level
        refresh_targets(state)
        _clear_histories(state)
    state.round += 1


def _start_rectified_generation(state: RunState) -> None:
    """Spawn one worker per supported fixed policy with a rectified target.

    Each supported policy trains only against the mixture of opponents it
    beats or ties under the current meta-Nash, renormalized.  A policy
    always ties itself (zero diagonal), so the restricted mass is never
    empty.
    """
    pop = state.population
    n = pop.n_fixed
    sub = SymmetricGame(pop.empirical_matrix(n))
    meta = solve_meta_nash(sub, state.solver, _meta_init(state, n))
    members = [i for i in range(n) if meta.weights[i] > state.solver.support_threshold]
    if not members:
        members = [int(np.argmax(meta.weights))]
    state.learners = []
    state.targets = []
    for m in members:
        beats_or_ties = pop.table[m, :n] >= 0.0
        w = np.where(beats_or_ties, meta.weights, 0.0)
        w = w / w.sum()
        state.targets.append(pop.mixture_strategy(w))
        state.learners.append(make_learner(state.game.dim, n + len(state.learners), state.anneal))


def _finish_rectified_generation(state: RunState) -> None:
    """Freeze the generation's novel policies; stop when none are novel."""
    pop = state.population
    existing = list(pop.policies)
    added: list[int] = []
    for learner in state.learners:
        policy = learner.policy
        if any(float(np.max(np.abs(policy - q))) < DUPLICATE_ATOL for q in existing):
            continue
        pop.add_active_policy(policy)
        pop.promote_lowest_active()
        existing.append(policy)
        added.append(len(pop.policies) - 1)
    state.generation_log.append(added)
    state.learners = []
    state.targets = []
    if not added:
        state.finished = True


def rectified_round(state: RunState) -> None:
    """One rectified round: train the generation, close it when all plateau."""
    if state.finished:
        return
    if not state.learners:
        _start_rectified_generation(state)
    _step_workers(state)
    if all(is_plateaued(learner, state.plateau) for learner in state.learners):
        _finish_rectified_generation(state)
    state.round += 1


ROUND_FUNCTIONS = {
    "sequential_psro": sequential_round,
    "naive_psro": naive_round,
    "p2sro": p2sro_round,
    "dch": dch_round,
    "rectified_psro": rectified_round,
    "self_play": self_play_round,
}


def _exploitability_of_population(
    game: SymmetricGame,
    policies: list[np.ndarray],
    table: np.ndarray,
    n_fixed: int,
    count: int,
    solver: SolverConfig,
) -> float:
    """Base-game exploitability of the meta-Nash over ``count`` policies.

    Works from an explicit policy snapshot rather than a live population
    so the threaded driver can evaluate outside the worker lock.
    """
    stacked = np.stack(policies[:count])
    m = stacked @ game.payoffs @ stacked.T
    nf = min(n_fixed, count)
    m[:nf, :nf] = table[:nf, :nf]
    upper = np.triu(m, 1)
    sub = SymmetricGame(upper - upper.T)
    meta = solve_meta_nash(sub, solver)
    mixture = meta.weights @ stacked
    return best_response_value(game, mixture)


def evaluate(state: RunState) -> float:
    """Exploitability of the run's current meta-Nash mixture.

    Active in-progress policies count as population members unless the
    scheduler says to rank fixed policies only.  Rectified runs have no
    published active policies, so both settings agree there.
    """
    pop = state.population
    count = pop.n_fixed if state.scheduler.eval_fixed_only else len(pop.policies)
    return _exploitability_of_population(
        state.game, pop.policies, pop.table, pop.n_fixed, count, state.solver
    )


def _record(state: RunState, record_hook=None) -> None:
    if state.records and state.records[-1].round == state.round:
        return
    record = TraceRecord(
        round=state.round,
        global_step=state.global_step,
        exploitability=evaluate(state),
        population_size=len(state.population.policies),
    )
    state.records.append(record)
    if record_hook is not None:
        record_hook(record)


def _build_trace(state: RunState) -> ExploitabilityTrace:
    metadata = {
        "algorithm": state.algorithm,
        "dim": state.game.dim,
        "workers": state.scheduler.workers,
        "mode": state.scheduler.mode,
        "lr": state.anneal.r0,
        "anneal": state.anneal.kind,
        "gamma": state.anneal.gamma,
        "run_seed": state.seed,
    }
    trace = ExploitabilityTrace(records=list(state.records), metadata=metadata)
    trace.validate()
    return trace


def run(
    game: SymmetricGame,
    algorithm: str,
    scheduler: SchedulerConfig = SchedulerConfig(),
    plateau: PlateauConfig = PlateauConfig(),
    anneal: AnnealSchedule = AnnealSchedule(),
    solver: SolverConfig = SolverConfig(),
    seed: int = 0,
    init_policy: str = "uniform",
    record_hook=None,
    return_state: bool = False,
):
    """Run one algorithm to its step budget and return its trace.

    The budget is spent in rounds of one step per effective worker, so
    serial algorithms get ``max_steps`` rounds while parallel ones get
    ``max_steps // workers``; traces therefore compare equal step budgets
    rather than equal round counts.  With ``return_state`` the final
    ``RunState`` comes back alongside the trace for inspection.
    """
    state = init_run(game, algorithm, scheduler, plateau, anneal, solver, seed, init_policy)
    if scheduler.mode == "threaded":
        _run_threaded(state, record_hook)
    else:
        _run_lockstep(state, record_hook)
    trace = _build_trace(state)
    return (trace, state) if return_state else trace


def _run_lockstep(state: RunState, record_hook=None) -> None:
    scheduler = state.scheduler
    round_fn = ROUND_FUNCTIONS[state.algorithm]
    per_round = effective_workers(state.algorithm, scheduler.workers)
    max_rounds = max(1, scheduler.max_steps // per_round)
    _record(state, record_hook)
    while state.round < max_rounds and not state.finished:
        round_fn(state)
        if state.round % scheduler.eval_every == 0:
            _record(state, record_hook)
    _record(state, record_hook)


def _run_threaded(state: RunState, record_hook=None) -> None:
    """Free-running worker threads with a coordinator, same step budget.

    Workers loop over train steps holding a short lock per step.  The
    coordinator promotes plateaued workers and refreshes targets, doing
    every meta-Nash solve on snapshots outside the lock so workers never
    wait on one.  Between a promotion and the next installed refresh,
    workers train against their previous targets; that staleness is the
    behavioral difference from lockstep mode.
    """
    if state.algorithm not in _THREADABLE:
        raise ValueError(
            f"threaded mode supports {_THREADABLE}, got {state.algorithm!r}"
        )
    scheduler = state.scheduler
    plateau = state.plateau
    workers = scheduler.workers
    budget = scheduler.max_steps
    lock = threading.Lock()
    stop = threading.Event()

    def worker_loop(index: int) -> None:
        while not stop.is_set():
            with lock:
                if state.global_step >= budget:
                    stop.set()
                    return
                learner = state.learners[index]
                target = state.targets[index]
                train_step(learner, target, state.game)
                state.population.publish(state.population.n_fixed + index, learner.policy)
                state.global_step += 1
                if learner.step_count % plateau.eval_period == 0:
                    record_performance(learner, performance(learner, target, state.game))
            time.sleep(scheduler.worker_step_delay)

    def snapshot():
        with lock:
            pop = state.population
            return (
                list(pop.policies),
                pop.table,
                pop.n_fixed,
                [learner.level for learner in state.learners],
                state.global_step,
            )

    def install_targets() -> None:
        """Solve per-learner metas from a snapshot, then swap targets in."""
        policies, table, n_fixed, levels, _ = snapshot()
        pop = state.population
        stacked = np.stack(policies)
        fresh: list[np.ndarray] = []
        for level in levels:
            below = sum(1 for lv in pop.levels if lv < level)
            if state.algorithm == "naive_psro":
                below = n_fixed
            m = stacked[:below] @ state.game.payoffs @ stacked[:below].T
            nf = min(n_fixed, below)
            m[:nf, :nf] = table[:nf, :nf]
            upper = np.triu(m, 1)
            sub = SymmetricGame(upper - upper.T)
            meta = solve_meta_nash(sub, state.solver, _meta_init(state, below))
            fresh.append(meta.weights @ stacked[:below])
        with lock:
            state.targets = fresh

    def record_at(step_count: int) -> None:
        policies, table, n_fixed, _, _ = snapshot()
        count = n_fixed if scheduler.eval_fixed_only else len(policies)
        expl = _exploitability_of_population(
            state.game, policies, table, n_fixed, count, state.solver
        )
        round_index = step_count // workers
        if state.records and state.records[-1].round >= round_index:
            return
        record = TraceRecord(
            round=round_index,
            global_step=step_count,
            exploitability=expl,
            population_size=len(policies),
        )
        state.records.append(record)
        if record_hook is not None:
            record_hook(record)

    record_at(0)
    threads = [
        threading.Thread(target=worker_loop, args=(i,), daemon=True)
        for i in range(workers)
    ]
    for thread in threads:
        thread.start()

    refresh_steps = scheduler.meta_refresh_period * workers
    eval_steps = scheduler.eval_every * workers
    next_refresh = refresh_steps
    next_eval = eval_steps
    while not stop.is_set():
        promoted = False
        if state.algorithm in ("p2sro", "naive_psro"):
            with lock:
                if state.algorithm == "p2sro":
                    plateaued = [0] if is_plateaued(state.learners[0], plateau) else []
                else:
                    plateaued = [
                        i
                        for i, learner in enumerate(state.learners)
                        if is_plateaued(learner, plateau)
                    ]
                if plateaued:
                    old_targets = list(state.targets)
                    if state.algorithm == "p2sro":
                        _promote_pipeline_lowest(state)
                        # Surviving learners keep their mixtures until the
                        # out-of-lock refresh lands; the fresh top learner
                        # borrows the old top target for those few steps.
                        state.targets = old_targets[1:] + [old_targets[-1]]
                    else:
                        _promote_flat_worker(state, plateaued[0])
                        state.targets = old_targets
                    _clear_histories(state)
                    promoted = True
        if promoted:
            install_targets()
        step_now = state.global_step
        if step_now >= next_refresh:
            install_targets()
            next_refresh = step_now + refresh_steps
        if step_now >= next_eval:
            record_at(step_now)
            next_eval = step_now + eval_steps
        time.sleep(0.0005)
    for thread in threads:
        thread.join()
    state.round = state.global_step // workers
    record_at(state.global_step)
    # _record dedupes on the final round; records were appended directly
    # here, so just make sure the trailing round index matches the state.
    if state.records:
        state.round = max(state.round, state.records[-1].round)
