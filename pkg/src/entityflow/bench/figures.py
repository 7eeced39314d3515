"""Matplotlib figures for bench and overhead reports (written as PNG files)."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..runtime.metrics import STAGES  # noqa: E402


def latency_cdf(series: list[tuple[int, str, float, bool]], path: str | Path, title: str = "End-to-end latency") -> Path:
    """Per-endpoint empirical CDF of invocation latency."""
    by_endpoint: dict[str, list[float]] = {}
    for _, method, secs, _ok in series:
        by_endpoint.setdefault(method, []).append(secs * 1000)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, xs in sorted(by_endpoint.items()):
        a = np.sort(np.asarray(xs))
        ax.step(a, np.arange(1, a.size + 1) / a.size, where="post", label=f"{name} (n={a.size})")
    ax.set_xlabel("latency (ms)")
    ax.set_ylabel("fraction of requests")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    if by_endpoint:
        ax.legend()
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=110)
    plt.close(fig)
    return out


def stage_breakdown(stages_ns: dict[str, dict[str, float]], path: str | Path, title: str = "Per-event stage time") -> Path:
    """Mean per-event time of each runtime stage."""
    names = [s for s in STAGES if s in stages_ns]
    means = [stages_ns[s]["mean_ns"] / 1000 for s in names]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(names, means, color="#4c72b0")
    ax.set_ylabel("mean µs / event")
    ax.set_title(title)
    ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=110)
    plt.close(fig)
    return out


def overhead_bars(report: dict[str, Any], path: str | Path) -> Path:
    """Stacked per-event stage shares per state size, compiler stages hatched."""
    rows = report["rows"]
    compiler = set(report["attribution"]["compiler"])
    labels = [f"{r['state_size_kb']:g} kb" for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    bottom = np.zeros(len(rows))
    for s in STAGES:
        share = np.array([r["stage_share"][s] * 100 for r in rows])
        ax.bar(labels, share, bottom=bottom, label=s, hatch="//" if s in compiler else None)
        bottom += share
    ax.set_ylabel("share of per-event time (%)")
    ax.set_title("Overhead attribution (hatched = compiler)")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=110)
    plt.close(fig)
    return out
