"""Exploitability traces and their delimited-text serialization."""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = [
    "TraceRecord",
    "ExploitabilityTrace",
    "write_trace_csv",
    "read_trace_csv",
    "CSV_HEADER",
]

CSV_HEADER = "round,global_step,exploitability,population_size"


@dataclass(frozen=True)
class TraceRecord:
    round: int
    global_step: int
    exploitability: float
    population_size: int


@dataclass
class ExploitabilityTrace:
    """Time series of whole-population exploitability for one run.

    ``metadata`` carries the identifying cell coordinates (algorithm, dim,
    lr, workers, game_seed, run_seed, ...) and rides along as comment lines
    in the serialized form.
    """

    records: list[TraceRecord] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def validate(self) -> None:
        rounds = [r.round for r in self.records]
        if rounds != sorted(set(rounds)):
            raise ValueError("trace rounds must be strictly increasing")
        for r in self.records:
            if r.exploitability < 0.0:
                raise ValueError(
                    f"negative exploitability {r.exploitability} at round {r.round}"
                )
            if r.population_size < 1:
                raise ValueError(f"empty population at round {r.round}")

    def rounds(self) -> list[int]:
        return [r.round for r in self.records]

    def final_exploitability(self) -> float:
        if not self.records:
            raise ValueError("trace has no records")
        return self.records[-1].exploitability


def _format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(s: str):
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            continue
    return s


def write_trace_csv(trace: ExploitabilityTrace, path) -> None:
    """Write one trace: metadata as ``# key=value`` lines, then the table."""
    trace.validate()
    lines = [f"# {k}={_format_value(v)}" for k, v in sorted(trace.metadata.items())]
    lines.append(CSV_HEADER)
    for r in trace.records:
        lines.append(
            f"{r.round},{r.global_step},{r.exploitability!r},{r.population_size}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trace_csv(path) -> ExploitabilityTrace:
    """Parse a trace file produced by write_trace_csv."""
    metadata: dict = {}
    records: list[TraceRecord] = []
    saw_header = False
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    metadata[k.strip()] = _parse_value(v.strip())
                continue
            if not saw_header:
                if line != CSV_HEADER:
                    raise ValueError(f"unexpected header {line!r} in {path}")
                saw_header = True
                continue
            cells = line.split(",")
            if len(cells) != 4:
                raise ValueError(f"malformed row {line!r} in {path}")
            records.append(
                TraceRecord(
                    round=int(cells[0]),
                    global_step=int(cells[1]),
                    exploitability=float(cells[2]),
                    population_size=int(cells[3]),
                )
            )
    if not saw_header:
        raise ValueError(f"{path} contains no trace header")
    trace = ExploitabilityTrace(records=records, metadata=metadata)
    trace.validate()
    return trace
