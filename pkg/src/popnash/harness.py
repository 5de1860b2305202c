"""Config-driven experiment sweeps, aggregation and verification reports.

The harness owns all file I/O: training itself emits trace records through
an in-process hook, and this module decides where they land.  A sweep is
the cross-product of (algorithm, game seed, run seed, learning rate,
worker count) over a single game dimension; each cell writes one CSV whose
name encodes the cell, so identical configs rerun to identical files.
"""

from __future__ import annotations

import dataclasses
import glob as globlib
import itertools
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .games import SymmetricGame, canonical_game, generate_random_game
from .learners import AnnealSchedule, PlateauConfig
from .meta import (
    MAX_CHECK_DIM,
    SolverConfig,
    SupportTheoremReport,
    check_support_theorem,
)
from .orchestrators import ALGORITHMS, SchedulerConfig, run
from .traces import ExploitabilityTrace, read_trace_csv, write_trace_csv

ENV_OUTPUT_DIR = "POPNASH_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"

# Strategy names for the four-strategy counterexample fixture, in index
# order: rock-paper-scissors plus the strategy that beats all three.
COUNTEREXAMPLE_NAMES = ("Rock", "Paper", "Scissors", "Counter")


class ConfigError(ValueError):
    """Invalid experiment configuration; message says which key and why."""


@dataclass(frozen=True)
class GameSpec:
    """Which base games a sweep runs on: seeded random or a named fixture."""

    kind: str = "random"
    dim: int = 15
    game_seeds: tuple[int, ...] = (0,)
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("random", "fixture"):
            raise ConfigError(f"game.kind must be 'random' or 'fixture', got {self.kind!r}")
        if self.kind == "random":
            if self.dim < 1:
                raise ConfigError(f"game.dim must be >= 1, got {self.dim}")
            if not self.game_seeds:
                raise ConfigError("game.game_seeds must be non-empty")
        elif not self.name:
            raise ConfigError("game.name required for fixture games")

    def labels(self) -> tuple:
        """Sweep axis values: seeds for random games, the name for fixtures."""
        return self.game_seeds if self.kind == "random" else (self.name,)

    def build(self, label) -> SymmetricGame:
        if self.kind == "random":
            return generate_random_game(self.dim, int(label))
        return canonical_game(self.name)


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: game spec, axis lists, and shared run settings."""

    game: GameSpec = GameSpec()
    algorithms: tuple[str, ...] = ("p2sro",)
    learning_rates: tuple[float, ...] = (0.5,)
    workers: tuple[int, ...] = (1,)
    run_seeds: tuple[int, ...] = (0,)
    anneal_kind: str = "constant"
    anneal_gamma: float = 0.0
    scheduler: SchedulerConfig = SchedulerConfig()
    plateau: PlateauConfig = PlateauConfig()
    solver: SolverConfig = SolverConfig()
    init_policy: str = "uniform"
    output_dir: str = ""
    jobs: int = 1

    def __post_init__(self):
        for name in ("algorithms", "learning_rates", "workers", "run_seeds"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be non-empty")
        for alg in self.algorithms:
            if alg not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {alg!r}, expected one of {ALGORITHMS}")
        for lr in self.learning_rates:
            if not 0.0 < lr <= 1.0:
                raise ConfigError(f"learning rates must lie in (0, 1], got {lr}")
        for w in self.workers:
            if w < 1:
                raise ConfigError(f"worker counts must be >= 1, got {w}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")

    def resolved_output_dir(self) -> Path:
        if self.output_dir:
            return Path(self.output_dir)
        return Path(os.environ.get(ENV_OUTPUT_DIR, DEFAULT_OUTPUT_DIR))

    def cells(self) -> list[tuple]:
        """Cross-product of the sweep axes, in deterministic order."""
        return list(
            itertools.product(
                self.algorithms,
                self.game.labels(),
                self.run_seeds,
                self.learning_rates,
                self.workers,
            )
        )


def _set_dotted(raw: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = raw
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {dotted!r} descends through non-object {part!r}")
    node[parts[-1]] = value


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, _, value = text.partition("=")
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value.strip()


def _take(raw: dict, known: dict, where: str) -> dict:
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    merged = dict(known)
    merged.update(raw)
    return merged


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build and validate a config from nested plain dicts."""
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be an object, got {type(raw).__name__}")
    raw = dict(raw)
    game_raw = raw.pop("game", {})
    game = GameSpec(
        kind=str(game_raw.get("kind", "random")),
        dim=int(game_raw.get("dim", 15)),
        game_seeds=tuple(int(s) for s in game_raw.get("game_seeds", [0])),
        name=str(game_raw.get("name", "")),
    )
    sched_defaults = {f.name: getattr(SchedulerConfig(), f.name) for f in dataclasses.fields(SchedulerConfig)}
    sched_defaults.pop("workers")  # sweep axis, not a shared setting
    sched_raw = _take(raw.pop("scheduler", {}), sched_defaults, "scheduler")
    plateau_defaults = {f.name: getattr(PlateauConfig(), f.name) for f in dataclasses.fields(PlateauConfig)}
    plateau_raw = _take(raw.pop("plateau", {}), plateau_defaults, "plateau")
    solver_defaults = {f.name: getattr(SolverConfig(), f.name) for f in dataclasses.fields(SolverConfig)}
    solver_raw = _take(raw.pop("solver", {}), solver_defaults, "solver")
    anneal_raw = raw.pop("anneal", {})
    top = _take(
        raw,
        {
            "algorithms": ["p2sro"],
            "learning_rates": [0.5],
            "workers": [1],
            "run_seeds": [0],
            "init_policy": "uniform",
            "output_dir": "",
            "jobs": 1,
        },
        "config",
    )
    try:
        return ExperimentConfig(
            game=game,
            algorithms=tuple(str(a) for a in top["algorithms"]),
            learning_rates=tuple(float(lr) for lr in top["learning_rates"]),
            workers=tuple(int(w) for w in top["workers"]),
            run_seeds=tuple(int(s) for s in top["run_seeds"]),
            anneal_kind=str(anneal_raw.get("kind", "constant")),
            anneal_gamma=float(anneal_raw.get("gamma", 0.0)),
            scheduler=SchedulerConfig(workers=1, **sched_raw),
            plateau=PlateauConfig(**plateau_raw),
            solver=SolverConfig(**solver_raw),
            init_policy=str(top["init_policy"]),
            output_dir=str(top["output_dir"]),
            jobs=int(top["jobs"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides=()) -> ExperimentConfig:
    """Parse a JSON config file and apply dotted key=value overrides.

    Overrides win over file values; values parse as JSON when possible
    and fall back to bare strings, so ``--override workers=[1,3]`` and
    ``--override game.kind=fixture`` both work.
    """
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config parse failure in {path} at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    for item in overrides:
        key, value = _parse_override(item)
        _set_dotted(raw, key, value)
    return config_from_dict(raw)


def cell_filename(algorithm: str, dim: int, game_label, run_seed: int, lr: float, workers: int) -> str:
    return f"{algorithm}_d{dim}_g{game_label}_s{run_seed}_lr{lr:g}_w{workers}.csv"


def run_cell(config: ExperimentConfig, cell: tuple, out_dir: Path) -> Path:
    """Run one sweep cell and write its trace CSV; returns the file path."""
    algorithm, game_label, run_seed, lr, workers = cell
    game = config.game.build(game_label)
    scheduler = dataclasses.replace(config.scheduler, workers=workers)
    anneal = AnnealSchedule(kind=config.anneal_kind, r0=lr, gamma=config.anneal_gamma)
    trace = run(
        game,
        algorithm,
        scheduler,
        config.plateau,
        anneal,
        config.solver,
        seed=run_seed,
        init_policy=config.init_policy,
    )
    trace.metadata["game_seed"] = game_label
    path = out_dir / cell_filename(algorithm, game.dim, game_label, run_seed, lr, workers)
    write_trace_csv(trace, path)
    return path


def _run_cell_job(args):
    config, cell, out_dir = args
    return run_cell(config, cell, Path(out_dir))


def run_sweep(config: ExperimentConfig, progress=None) -> list[Path]:
    """Execute every cell of the sweep; returns the written file paths.

    Cells are independent, so with ``jobs > 1`` they run in a process
    pool; output paths come back in deterministic cell order either way.
    """
    out_dir = config.resolved_output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = config.cells()
    if config.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            paths = list(pool.map(_run_cell_job, [(config, c, str(out_dir)) for c in cells]))
        if progress is not None:
            for cell, path in zip(cells, paths):
                progress(cell, path)
        return paths
    paths = []
    for cell in cells:
        path = run_cell(config, cell, out_dir)
        paths.append(path)
        if progress is not None:
            progress(cell, path)
    return paths


@dataclass(frozen=True)
class AggregateRow:
    """Mean and spread of exploitability for one group at one round."""

    group: tuple
    round: int
    n: int
    mean: float
    stderr: float


def aggregate_traces(paths, group_by) -> tuple[list[str], list[AggregateRow], list[str]]:
    """Group traces by metadata keys and average them per round.

    Every trace in a group must share the exact round grid; a mismatch is
    an error naming the offending files.  Standard error is the sample
    standard deviation over the group divided by sqrt(n); singleton
    groups get 0 with a warning collected in the returned list.
    """
    keys = list(group_by)
    if not keys:
        raise ValueError("group_by needs at least one metadata key")
    if not paths:
        raise ValueError("no trace files to aggregate")
    groups: dict[tuple, list[tuple[str, ExploitabilityTrace]]] = {}
    for path in paths:
        trace = read_trace_csv(path)
        missing = [k for k in keys if k not in trace.metadata]
        if missing:
            raise ValueError(f"{path} lacks metadata keys {missing}")
        group = tuple(trace.metadata[k] for k in keys)
        groups.setdefault(group, []).append((str(path), trace))
    warnings: list[str] = []
    rows: list[AggregateRow] = []
    for group in sorted(groups, key=repr):
        members = groups[group]
        grid = members[0][1].rounds()
        for name, trace in members[1:]:
            if trace.rounds() != grid:
                raise ValueError(
                    f"round grid mismatch in group {group}: {members[0][0]} has "
                    f"{len(grid)} rounds, {name} has {len(trace.rounds())}"
                )
        n = len(members)
        if n == 1:
            warnings.append(f"group {group} has a single trace; stderr reported as 0")
        series = np.array([[r.exploitability for r in t.records] for _, t in members])
        means = series.mean(axis=0)
        if n > 1:
            stderrs = series.std(axis=0, ddof=1) / math.sqrt(n)
        else:
            stderrs = np.zeros_like(means)
        for i, rnd in enumerate(grid):
            rows.append(AggregateRow(group, rnd, n, float(means[i]), float(stderrs[i])))
    return keys, rows, warnings


def write_aggregate_csv(keys, rows, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join([*keys, "round", "n", "mean_exploitability", "stderr_exploitability"]) + "\n")
        for row in rows:
            cells = [str(v) for v in row.group]
            cells += [str(row.round), str(row.n), repr(row.mean), repr(row.stderr)]
            fh.write(",".join(cells) + "\n")


@dataclass(frozen=True)
class CounterexampleReport:
    """What happened on the fixture where rectified training gets stuck."""

    generations: tuple[tuple[str, ...], ...]
    rectified_population: tuple[str, ...]
    rectified_exploitability: float
    double_oracle_exploitability: float
    double_oracle_promotions_to_solve: int
    passed: bool
    failures: tuple[str, ...] = ()

    def lines(self) -> list[str]:
        out = []
        for i, names in enumerate(self.generations, start=1):
            added = ", ".join(names) if names else "nothing; terminated"
            out.append(f"generation {i}: added {added}")
        out.append(
            "rectified population: {" + ", ".join(self.rectified_population) + "}"
            f" at exploitability {self.rectified_exploitability:.12g}"
        )
        out.append(
            f"double oracle: exploitability {self.double_oracle_exploitability:.3g} "
            f"after {self.double_oracle_promotions_to_solve} promotions"
        )
        out.append("counterexample check: " + ("PASS" if self.passed else "FAIL"))
        out.extend(f"  failure: {f}" for f in self.failures)
        return out


def verify_counterexample(tolerance: float = 1e-9) -> CounterexampleReport:
    """Exercise the fixture both ways and check the known outcomes.

    Rectified training with exact best responses must add Paper, then
    Scissors, then terminate with the counter strategy undiscovered and
    exploitability exactly 2/5.  The plain double-oracle loop on the same
    fixture must find the counter strategy and reach exploitability 0.
    """
    game = canonical_game("rectified_counterexample")
    fast = PlateauConfig(window=2, min_improvement=0.01, eval_period=1)
    oracle = AnnealSchedule(kind="constant", r0=1.0)
    _, rect = run(
        game,
        "rectified_psro",
        SchedulerConfig(workers=1, max_steps=60, eval_every=1),
        fast,
        oracle,
        seed=0,
        init_policy="pure:0",
        return_state=True,
    )
    generations = tuple(
        tuple(COUNTEREXAMPLE_NAMES[int(np.argmax(rect.population.policies[i]))] for i in added)
        for added in rect.generation_log
    )
    rect_pop = tuple(
        COUNTEREXAMPLE_NAMES[int(np.argmax(p))] for p in rect.population.policies
    )
    rect_final = rect.records[-1].exploitability

    do_trace, do_state = run(
        game,
        "sequential_psro",
        SchedulerConfig(workers=1, max_steps=16, eval_every=1, meta_refresh_period=1),
        fast,
        oracle,
        seed=0,
        init_policy="pure:0",
        return_state=True,
    )
    do_final = do_trace.final_exploitability()
    promotions_to_solve = do_state.promotions
    for record in do_trace.records:
        if record.exploitability <= tolerance:
            # One initial fixed policy plus one active learner per record.
            promotions_to_solve = record.population_size - 2
            break

    failures = []
    if generations != (("Paper",), ("Scissors",), ()):
        failures.append(f"rectified generations were {generations}")
    if rect_pop != ("Rock", "Paper", "Scissors"):
        failures.append(f"rectified population was {rect_pop}")
    if not rect.finished:
        failures.append("rectified run did not terminate on its own")
    if abs(rect_final - 0.4) > tolerance:
        failures.append(f"rectified exploitability {rect_final!r} is not 0.4 within {tolerance}")
    if do_final > tolerance:
        failures.append(f"double oracle exploitability {do_final!r} exceeds {tolerance}")
    return CounterexampleReport(
        generations=generations,
        rectified_population=rect_pop,
        rectified_exploitability=rect_final,
        double_oracle_exploitability=do_final,
        double_oracle_promotions_to_solve=promotions_to_solve,
        passed=not failures,
        failures=tuple(failures),
    )


@dataclass(frozen=True)
class TheoremSweepReport:
    """Tally of restricted-equilibrium checks over seeded random games."""

    dim: int
    base_seed: int
    passes: int
    unresolved: tuple[int, ...]
    failed: tuple[int, ...]
    reports: tuple[SupportTheoremReport, ...] = field(repr=False, default=())

    def lines(self) -> list[str]:
        out = [
            f"checked {len(self.reports)} games at dim {self.dim}: "
            f"{self.passes} passed, {len(self.unresolved)} unresolved, {len(self.failed)} failed"
        ]
        if self.unresolved:
            out.append(f"unresolved seeds: {list(self.unresolved)}")
        for seed in self.failed:
            report = self.reports[seed - self.base_seed]
            out.append(f"FAILURE at seed {seed}: {report.failures}")
        return out


def run_theorem_sweep(dim: int, n_games: int, seed: int = 0, **check_kwargs) -> TheoremSweepReport:
    """Run the restricted-equilibrium check on ``n_games`` seeded games.

    Game seeds are ``seed .. seed + n_games - 1``.  A failure means a
    sub-population equilibrium beat every missing Nash-support strategy,
    which would contradict the supported claim and points at a bug.
    """
    if dim > MAX_CHECK_DIM:
        raise ValueError(f"dim {dim} exceeds the exhaustive-check guard ({MAX_CHECK_DIM})")
    if n_games < 1:
        raise ValueError(f"n_games must be >= 1, got {n_games}")
    passes = 0
    unresolved = []
    failed = []
    reports = []
    for i in range(n_games):
        game = generate_random_game(dim, seed + i)
        report = check_support_theorem(game, **check_kwargs)
        reports.append(report)
        if report.unresolved:
            unresolved.append(seed + i)
        elif report.holds:
            passes += 1
        else:
            failed.append(seed + i)
    return TheoremSweepReport(
        dim=dim,
        base_seed=seed,
        passes=passes,
        unresolved=tuple(unresolved),
        failed=tuple(failed),
        reports=tuple(reports),
    )


def expand_trace_globs(patterns) -> list[str]:
    """Resolve one or more glob patterns to a sorted list of files."""
    found: list[str] = []
    for pattern in patterns:
        found.extend(globlib.glob(pattern))
    unique = sorted(set(found))
    if not unique:
        raise ValueError(f"no files match {list(patterns)}")
    return unique
