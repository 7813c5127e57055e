"""Matplotlib figure emission for the eval and report paths.

Renders to files only (Agg backend); PNG metadata is stripped so reruns
with identical inputs produce identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = {"dpi": 120, "metadata": {"Software": None}}


def save_bev_panel(gt_bev: np.ndarray, gen_bev: np.ndarray, path, title: str = "") -> None:
    """Side-by-side BEV images (ground truth vs. generated), x forward."""
    fig, axes = plt.subplots(1, 2, figsize=(8, 4.5), sharex=True, sharey=True)
    for ax, img, name in ((axes[0], gt_bev, "ground truth"), (axes[1], gen_bev, "generated")):
        im = ax.imshow(
            img,
            origin="lower",
            cmap="viridis",
            vmin=0.0,
            vmax=1.0,
            aspect="auto",
            interpolation="nearest",
        )
        ax.set_title(name)
        ax.set_xlabel("y bin")
    axes[0].set_ylabel("x bin")
    if title:
        fig.suptitle(title)
    fig.colorbar(im, ax=axes, shrink=0.85, label="normalized power")
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_des_chart(labels, scores, path) -> None:
    """Bar chart of per-method efficiency scores."""
    fig, ax = plt.subplots(figsize=(7, 4))
    pos = np.arange(len(labels))
    ax.bar(pos, scores, color="#3a6ea5")
    ax.set_xticks(pos)
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("efficiency score")
    ax.set_title("normalized quality per unit point-cloud density")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
