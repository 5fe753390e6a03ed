"""Static figures for pipeline runs: anomaly maps and a detector comparison chart.

Rendering uses the non-interactive Agg backend, so it works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# PNG metadata without a version stamp keeps figure bytes stable across runs
_PNG_META = {"Software": None}


def score_percentiles(scores) -> np.ndarray:
    """Rank-based percentile in [0, 100]; robust to the heavy tails of raw scores."""
    s = np.asarray(scores, dtype=float)
    if s.size < 2:
        return np.full(s.shape, 100.0)
    ranks = np.argsort(np.argsort(s, kind="stable"), kind="stable")
    return 100.0 * ranks / (s.size - 1)


def plot_anomaly_map(positions, scores, path, deposits=None, title: str = "") -> Path:
    """Scatter map of samples coloured by score percentile, deposits as stars."""
    pos = np.asarray(positions, dtype=float)
    pct = score_percentiles(scores)
    order = np.argsort(pct, kind="stable")  # draw high scores on top
    fig, ax = plt.subplots(figsize=(6.0, 5.2))
    sc = ax.scatter(pos[order, 0], pos[order, 1], c=pct[order], s=9, cmap="viridis", vmin=0, vmax=100,
                    linewidths=0)
    if deposits is not None and len(deposits):
        dep = np.asarray(deposits, dtype=float).reshape(-1, 2)
        ax.scatter(dep[:, 0], dep[:, 1], marker="*", s=140, c="red", edgecolors="black",
                   linewidths=0.6, label="deposit")
        ax.legend(loc="upper right", frameon=True, fontsize=8)
    fig.colorbar(sc, ax=ax, label="score percentile")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_aspect("equal", adjustable="datalim")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_auc_comparison(names, means, variances, path, title: str = "") -> Path:
    """Bar chart of mean AUC per detector with one-standard-deviation whiskers."""
    means = np.asarray(means, dtype=float)
    sd = np.sqrt(np.asarray(variances, dtype=float))
    fig, ax = plt.subplots(figsize=(max(4.0, 0.8 * len(names) + 2), 4.0))
    x = np.arange(len(names))
    ax.bar(x, means, yerr=sd, capsize=3, color="#4c72b0")
    ax.axhline(0.5, color="grey", linestyle="--", linewidth=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("mean AUC")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path
