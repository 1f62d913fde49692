"""Matplotlib renderings of rollout and evaluation data, written by the CLI
report paths next to the CSV/JSON outputs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .plan import FOOT_NAMES

_FOOT_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728")


def footfall_figure(time_s: np.ndarray, contact: np.ndarray, satisfied: np.ndarray | None = None):
    """Gait diagram: filled bars while each foot is in ground contact, with
    correct-contact windows overlaid when satisfaction data is given."""
    fig, ax = plt.subplots(figsize=(9, 2.6))
    dt = float(time_s[1] - time_s[0]) if len(time_s) > 1 else 0.02
    for f, name in enumerate(FOOT_NAMES):
        spans = _true_spans(contact[:, f])
        ax.broken_barh(
            [(time_s[a], (b - a) * dt) for a, b in spans],
            (f + 0.1, 0.8),
            facecolors=_FOOT_COLORS[f],
            alpha=0.45,
        )
        if satisfied is not None:
            spans = _true_spans(satisfied[:, f])
            ax.broken_barh(
                [(time_s[a], (b - a) * dt) for a, b in spans],
                (f + 0.3, 0.4),
                facecolors=_FOOT_COLORS[f],
            )
    ax.set_yticks([f + 0.5 for f in range(4)], FOOT_NAMES)
    ax.set_xlabel("time [s]")
    ax.set_ylim(0, 4)
    ax.set_title("footfall pattern" + ("" if satisfied is None else " (solid = on target)"))
    fig.tight_layout()
    return fig


def trajectory_figure(time_s, base_pos, reward_total, stage_index):
    fig, axes = plt.subplots(3, 1, figsize=(9, 6), sharex=True)
    base_pos = np.asarray(base_pos)
    axes[0].plot(time_s, base_pos[:, 0], label="x")
    axes[0].plot(time_s, base_pos[:, 1], label="y")
    axes[0].plot(time_s, base_pos[:, 2], label="z")
    axes[0].set_ylabel("base [m]")
    axes[0].legend(loc="upper left", ncols=3, fontsize=8)
    axes[1].plot(time_s, reward_total, color="#2ca02c")
    axes[1].set_ylabel("reward")
    axes[2].step(time_s, stage_index, where="post", color="#9467bd")
    axes[2].set_ylabel("stage")
    axes[2].set_xlabel("time [s]")
    fig.tight_layout()
    return fig


def eval_figure(reports: list[dict]):
    """Success-rate bars per terrain with repeat-block spread."""
    fig, ax = plt.subplots(figsize=(1.6 + 1.4 * len(reports), 3.4))
    names = [r["terrain"] for r in reports]
    means = [r["success_rate_mean"] for r in reports]
    stds = [r["success_rate_std"] for r in reports]
    ax.bar(names, means, yerr=stds, capsize=4, color="#1f77b4", alpha=0.85)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("success rate")
    ax.tick_params(axis="x", labelrotation=20)
    fig.tight_layout()
    return fig


def save_figure(fig, path) -> None:
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _true_spans(mask: np.ndarray) -> list[tuple[int, int]]:
    spans = []
    start = None
    for i, v in enumerate(mask):
        if v and start is None:
            start = i
        elif not v and start is not None:
            spans.append((start, i))
            start = None
    if start is not None:
        spans.append((start, len(mask)))
    return spans
