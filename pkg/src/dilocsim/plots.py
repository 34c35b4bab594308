"""Figure rendering for run traces and verification reports.

Every CLI report path writes these figures next to its CSV/JSON output.
The Agg backend keeps rendering headless and byte-deterministic, so
repeated runs with the same inputs produce identical PNG files.
"""
from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .localization import RunTrace
from .network import NetworkScenario


def plot_trajectories(trace: RunTrace, scenario: NetworkScenario, path: str | Path, title: str = "") -> None:
    """Estimate trajectories in the plane, with anchors and true positions."""
    fig, ax = plt.subplots(figsize=(5.5, 5))
    ax.plot(
        [p.x for _, p in scenario.anchors] + [scenario.anchors[0][1].x],
        [p.y for _, p in scenario.anchors] + [scenario.anchors[0][1].y],
        "k--", linewidth=0.8, alpha=0.6,
    )
    ax.plot(
        [p.x for _, p in scenario.anchors],
        [p.y for _, p in scenario.anchors],
        "k^", markersize=9, label="anchors",
    )
    for sid in trace.sensor_ids:
        xs = [state.estimates[sid].x for state in trace.states]
        ys = [state.estimates[sid].y for state in trace.states]
        (line,) = ax.plot(xs, ys, linewidth=1.0, label=f"sensor {sid}")
        ax.plot(xs[-1], ys[-1], "o", color=line.get_color(), markersize=4)
        truth = scenario.position(sid)
        ax.plot(truth.x, truth.y, "*", color=line.get_color(), markersize=10, alpha=0.7)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8, loc="best")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_error_curves(traces: Mapping[str, RunTrace], path: str | Path, title: str = "") -> None:
    """Max-over-sensors error versus iteration, log scale, one curve per run."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, trace in traces.items():
        errors = [max(e, 1e-300) for e in trace.errors]
        ax.semilogy(range(len(errors)), errors, linewidth=1.0, label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("max location error")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_window_norms(window_norms, path: str | Path, title: str = "") -> None:
    """Per-window sub-stochastic product norms against the critical value 1."""
    fig, ax = plt.subplots(figsize=(6, 4))
    indices = [w.index for w in window_norms]
    norms = [w.norm for w in window_norms]
    ax.plot(indices, norms, "o-", markersize=3, linewidth=0.8, label="window product norm")
    ax.axhline(1.0, color="red", linewidth=0.8, linestyle="--", label="critical value 1")
    ax.set_xlabel("window index")
    ax.set_ylabel("infinity norm")
    ax.set_ylim(0, 1.1)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_product_decay(history, path: str | Path, title: str = "") -> None:
    """Running norm of the accumulated Q(t) product, log scale."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ts = [t for t, _ in history]
    norms = [max(n, 1e-300) for _, n in history]
    ax.semilogy(ts, norms, linewidth=1.0)
    ax.set_xlabel("iteration")
    ax.set_ylabel("product norm")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
