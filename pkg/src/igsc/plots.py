"""Figure rendering for evaluation reports, sweeps, and training curves.

All functions write PNG files (Agg backend, no display needed) and return
the written paths.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def save_sweep_curve(curve, path) -> Path:
    """Seen/unseen accuracy and harmonic mean against the calibration
    factor, with the best-H gamma marked."""
    gammas = [g for g, _ in curve.points]
    acc_s = [r.acc_s for _, r in curve.points]
    acc_u = [r.acc_u for _, r in curve.points]
    hs = [r.H for _, r in curve.points]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(gammas, acc_s, marker="o", markersize=3, label="seen accuracy")
    ax.plot(gammas, acc_u, marker="o", markersize=3, label="unseen accuracy")
    ax.plot(gammas, hs, marker="o", markersize=3, label="harmonic mean")
    ax.axvline(curve.best_gamma, color="gray", linestyle="--", linewidth=1,
               label=f"best gamma = {curve.best_gamma:g}")
    ax.set_xlabel("calibration factor")
    ax.set_ylabel("per-class top-1 accuracy")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _confusion_panel(ax, counts, row_classes, title):
    im = ax.imshow(counts, cmap="viridis", aspect="auto")
    ax.set_title(title, fontsize=10)
    ax.set_xlabel("predicted class")
    ax.set_ylabel("true class")
    if len(row_classes) <= 30:
        ax.set_yticks(range(len(row_classes)))
        ax.set_yticklabels([str(c) for c in row_classes], fontsize=7)
    return im


def save_confusion_figures(report, seen_classes, unseen_classes, out_dir,
                           prefix: str = "confusion") -> list[Path]:
    """Two heatmaps splitting the full confusion matrix by whether the true
    class is seen or unseen (columns always cover the union)."""
    out_dir = Path(out_dir)
    confusion = np.asarray(report.confusion)
    written = []
    panels = (
        (np.asarray(sorted(seen_classes)), "seen-class test images", f"{prefix}_seen.png"),
        (np.asarray(sorted(unseen_classes)), "unseen-class test images", f"{prefix}_unseen.png"),
    )
    for rows, title, name in panels:
        fig, ax = plt.subplots(figsize=(6, 4))
        im = _confusion_panel(ax, confusion[rows], rows, title)
        fig.colorbar(im, ax=ax, label="count")
        fig.tight_layout()
        path = out_dir / name
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def save_history_curve(history, path) -> Path:
    """Training loss per epoch, plus validation accuracy when recorded."""
    losses = history.losses
    epochs = np.arange(1, len(losses) + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, losses, color="tab:blue", label="training loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    val = [e.val_acc for e in history.epochs]
    if any(a is not None for a in val):
        twin = ax.twinx()
        twin.plot(epochs, [a if a is not None else np.nan for a in val],
                  color="tab:orange", label="validation accuracy")
        twin.set_ylabel("validation per-class accuracy")
        twin.set_ylim(-0.02, 1.02)
    ax.legend(frameon=False, fontsize=9, loc="upper right")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
