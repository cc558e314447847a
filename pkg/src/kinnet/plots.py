"""Figure rendering for the CLI report paths.

Every plotting helper writes a PNG next to the delimited artifact it
illustrates and closes the figure; nothing here is interactive.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def edge_matrix_figure(probs: np.ndarray, names, path) -> None:
    """Heatmap of marginal edge probabilities (source row, target column)."""
    p = len(names)
    fig, ax = plt.subplots(figsize=(1.0 + 0.6 * p, 0.8 + 0.6 * p))
    im = ax.imshow(probs, vmin=0, vmax=1, cmap="viridis")
    ax.set_xticks(range(p), names)
    ax.set_yticks(range(p), names)
    ax.set_xlabel("substrate (target)")
    ax.set_ylabel("regulator (source)")
    for i in range(p):
        for j in range(p):
            ax.text(j, i, f"{probs[i, j]:.2f}", ha="center", va="center",
                    color="white" if probs[i, j] < 0.6 else "black", fontsize=8)
    fig.colorbar(im, ax=ax, label="posterior edge probability")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def curves_figure(report, path) -> None:
    """Precision-recall and ROC panels for one metric report."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    pr = np.array(report.pr_curve)
    ax1.step(pr[:, 0], pr[:, 1], where="post")
    ax1.set_xlabel("recall")
    ax1.set_ylabel("precision")
    ax1.set_xlim(0, 1.02)
    ax1.set_ylim(0, 1.02)
    ax1.set_title(f"AUPR = {report.aupr:.3f}")
    roc = np.array(report.roc_curve)
    ax2.plot(roc[:, 0], roc[:, 1], marker=".")
    ax2.plot([0, 1], [0, 1], ls=":", color="grey")
    ax2.set_xlabel("false positive rate")
    ax2.set_ylabel("true positive rate")
    ax2.set_title(f"AUROC = {report.auroc:.3f}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def band_figure(band, names, path, test=None) -> None:
    """Phospho-channel prediction bands (mean +- sd), one panel per protein."""
    p = len(names)
    ncol = min(p, 3)
    nrow = int(np.ceil(p / ncol))
    fig, axes = plt.subplots(nrow, ncol, figsize=(4 * ncol, 3 * nrow),
                             squeeze=False, sharex=True)
    for i, name in enumerate(names):
        ax = axes[i // ncol][i % ncol]
        mu = band.mean[:, p + i]
        sd = band.sd[:, p + i]
        ax.plot(band.times, mu, label="ensemble mean")
        ax.fill_between(band.times, mu - sd, mu + sd, alpha=0.3, label="+- sd")
        if test is not None:
            ax.plot(test.times, test.states[:, p + i], "k--", lw=1, label="test")
        ax.set_title(f"{name} (phospho)")
        ax.set_xlabel("time (h)")
    axes[0][0].legend(fontsize=8)
    for j in range(p, nrow * ncol):
        axes[j // ncol][j % ncol].axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def dataset_figure(dataset, path) -> None:
    """All courses' phospho channels, one panel per protein."""
    p = dataset.panel.p
    ncol = min(p, 3)
    nrow = int(np.ceil(p / ncol))
    fig, axes = plt.subplots(nrow, ncol, figsize=(4 * ncol, 3 * nrow),
                             squeeze=False, sharex=True)
    for i, name in enumerate(dataset.panel.names):
        ax = axes[i // ncol][i % ncol]
        for c in dataset.courses:
            ax.plot(c.times, c.p[:, i], marker=".", ms=3, lw=0.8,
                    label=c.condition)
        ax.set_title(f"{name} (phospho)")
        ax.set_xlabel("time (h)")
    axes[0][0].legend(fontsize=7)
    for j in range(p, nrow * ncol):
        axes[j // ncol][j % ncol].axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
