"""Render aggregated exploitability curves to image files.

Uses the Agg backend unconditionally: the harness runs headless and only
ever writes figures next to the CSVs they were computed from.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

# Exploitability hits exact 0 on solved games; clip for the log axis.
LOG_FLOOR = 1e-12


def plot_aggregate(keys, rows, path, title: str = "", log_scale: bool = True) -> None:
    """One curve per group: mean exploitability by round with stderr band."""
    groups: dict[tuple, list] = {}
    for row in rows:
        groups.setdefault(row.group, []).append(row)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for group in sorted(groups, key=repr):
        members = sorted(groups[group], key=lambda r: r.round)
        x = np.array([r.round for r in members])
        mean = np.array([r.mean for r in members])
        err = np.array([r.stderr for r in members])
        if log_scale:
            mean = np.maximum(mean, LOG_FLOOR)
        label = ", ".join(f"{k}={v}" for k, v in zip(keys, group))
        (line,) = ax.plot(x, mean, label=label)
        lo = np.maximum(mean - err, LOG_FLOOR if log_scale else -np.inf)
        ax.fill_between(x, lo, mean + err, alpha=0.2, color=line.get_color())
    if log_scale:
        ax.set_yscale("log")
    ax.set_xlabel("round")
    ax.set_ylabel("exploitability")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_traces(traces, path, title: str = "", log_scale: bool = True) -> None:
    """One curve per raw trace, labeled from its metadata."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for trace in traces:
        x = [r.round for r in trace.records]
        y = np.array([r.exploitability for r in trace.records])
        if log_scale:
            y = np.maximum(y, LOG_FLOOR)
        md = trace.metadata
        label = " ".join(
            str(md[k]) for k in ("algorithm", "game_seed", "run_seed") if k in md
        )
        ax.plot(x, y, label=label, linewidth=1.0)
    if log_scale:
        ax.set_yscale("log")
    ax.set_xlabel("round")
    ax.set_ylabel("exploitability")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
