"""Population-based Nash solvers on symmetric zero-sum normal-form games.

Exact-best-response implementations of a family of population training
schemes (double oracle, flat and pipelined policy-space response, fixed
hierarchies, rectified expansion, self-play) sharing one evaluation
pipeline, plus an experiment harness that sweeps them over seeded random
games and two built-in verification reports.
"""

from .games import (
    SymmetricGame,
    best_response,
    best_response_value,
    canonical_game,
    expected_utility,
    exploitability,
    generate_random_game,
    pure_strategy,
    uniform_strategy,
)
from .learners import AnnealSchedule, LearnerState, PlateauConfig, make_learner, train_step
from .meta import (
    MetaNash,
    SolverConfig,
    SupportTheoremReport,
    check_support_theorem,
    fictitious_play,
    least_exploitable_mixture,
    solve_meta_nash,
)
from .orchestrators import ALGORITHMS, RunState, SchedulerConfig, run
from .population import Population, init_population, load_population, save_population
from .traces import ExploitabilityTrace, TraceRecord, read_trace_csv, write_trace_csv
from .harness import (
    ExperimentConfig,
    GameSpec,
    aggregate_traces,
    load_config,
    run_sweep,
    run_theorem_sweep,
    verify_counterexample,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "AnnealSchedule",
    "ExperimentConfig",
    "ExploitabilityTrace",
    "GameSpec",
    "LearnerState",
    "MetaNash",
    "PlateauConfig",
    "Population",
    "RunState",
    "SchedulerConfig",
    "SolverConfig",
    "SupportTheoremReport",
    "SymmetricGame",
    "TraceRecord",
    "aggregate_traces",
    "best_response",
    "best_response_value",
    "canonical_game",
    "check_support_theorem",
    "expected_utility",
    "exploitability",
    "fictitious_play",
    "generate_random_game",
    "init_population",
    "least_exploitable_mixture",
    "load_config",
    "load_population",
    "make_learner",
    "pure_strategy",
    "read_trace_csv",
    "run",
    "run_sweep",
    "run_theorem_sweep",
    "save_population",
    "solve_meta_nash",
    "train_step",
    "uniform_strategy",
    "verify_counterexample",
    "write_trace_csv",
    "__version__",
]
