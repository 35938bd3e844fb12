"""Matplotlib rendering for evaluation reports.

Figures are written next to the JSON/text report: a rank-vs-MAP comparison
chart and, when timing was collected, selection-latency boxplots.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_rank_map(report, path) -> None:
    """Average rank per method (lower is better) with MAP annotated on the line."""
    order = sorted(report.methods, key=lambda m: report.avg_rank[m])
    ranks = [report.avg_rank[m] for m in order]
    maps = [report.map[m] for m in order]
    fig, ax = plt.subplots(figsize=(max(6, 1.1 * len(order)), 4))
    ax.plot(range(len(order)), ranks, "o-", color="tab:blue")
    for x, (r, m) in enumerate(zip(ranks, maps)):
        ax.annotate(f"{m:.3f}", (x, r), textcoords="offset points",
                    xytext=(0, 8), ha="center", fontsize=8)
    ax.set_xticks(range(len(order)))
    ax.set_xticklabels(order, rotation=30, ha="right")
    ax.set_ylabel("average rank (lower is better)")
    ax.set_title("Method comparison; mean AP annotated")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_selection_latency(report, path) -> None:
    """Boxplots of per-dataset selection time and its percentage of fit time."""
    methods = [m for m in report.methods if report.timing.get(m, {}).get("selection_s")]
    if not methods:
        return
    with_pct = [m for m in methods if report.timing[m].get("pct_of_fit")]
    fig, axes = plt.subplots(1, 2 if with_pct else 1,
                             figsize=(max(8, 1.6 * len(methods)), 4), squeeze=False)
    ax = axes[0][0]
    ax.boxplot([report.timing[m]["selection_s"] for m in methods], tick_labels=methods)
    ax.set_ylabel("selection time (s)")
    ax.set_title("Selection latency per dataset")
    ax.grid(alpha=0.3)
    if with_pct:
        ax2 = axes[0][1]
        data = [np.clip(report.timing[m]["pct_of_fit"], 0, None) for m in with_pct]
        ax2.boxplot(data, tick_labels=with_pct)
        ax2.set_ylabel("% of selected-model fit time")
        ax2.set_title("Selection overhead")
        ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_loss_curve(loss_curve, path) -> None:
    """Training loss per epoch from the factorization."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(1, len(loss_curve) + 1), loss_curve, "o-", ms=3)
    ax.set_xlabel("epoch")
    ax.set_ylabel("total loss (negative smoothed DCG)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
