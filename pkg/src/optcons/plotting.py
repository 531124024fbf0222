"""Figure rendering for simulation reports (files only, no interactive use)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .simulator import SimReport  # noqa: E402

FIGSIZE = (6.4, 4.0)


def plot_disagreement(report: SimReport, path: Path) -> Path:
    """Semilog plot of the max pairwise squared state difference."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    d = np.asarray(report.disagreement)
    if d.size:
        ax.semilogy(report.times, np.maximum(d, 1e-300), lw=1.5, label=r"$\max_{i,j}\|x_i-x_j\|^2$")
        ax.semilogy(report.times, np.maximum(report.mean_error, 1e-300), lw=1.0, ls="--",
                    label=r"$\max_i\|x_i-y\|^2$")
        ax.legend(frameon=False)
    ax.set_xlabel("t")
    ax.set_ylabel("disagreement")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_states(report: SimReport, path: Path) -> Path:
    """One panel per state component, one line per agent."""
    n = report.states.shape[2]
    fig, axes = plt.subplots(n, 1, figsize=(FIGSIZE[0], 2.2 * n + 0.6), sharex=True, squeeze=False)
    for a in range(n):
        ax = axes[a, 0]
        for i in range(report.states.shape[1]):
            ax.plot(report.times, report.states[:, i, a], lw=1.0, label=f"agent {i + 1}")
        ax.plot(report.times, report.mean_traj[:, a], "k--", lw=1.0, label="mean")
        ax.set_ylabel(f"$x_{{{a + 1}}}$")
        ax.grid(True, alpha=0.3)
    axes[0, 0].legend(frameon=False, fontsize=8, ncol=3)
    axes[-1, 0].set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
