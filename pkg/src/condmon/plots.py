"""Figure renderings of the run report, written next to the CSVs.

Everything goes straight to files via the Agg backend; nothing is shown.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _bearing_colors(folds):
    return ["firebrick" if f.ground_truth != "healthy" else "steelblue" for f in folds]


def plot_max_deviations(report, path: Path) -> None:
    """Per-bearing worst inference deviation, threshold ticked per bar."""
    folds = report.folds
    fig, ax = plt.subplots(figsize=(8, 4))
    xs = np.arange(len(folds))
    ax.bar(xs, [f.max_deviation for f in folds], color=_bearing_colors(folds))
    ax.scatter(
        xs, [f.threshold for f in folds], marker="_", s=400, color="black",
        label="threshold T",
    )
    ax.set_xticks(xs)
    ax.set_xticklabels([f.test_label for f in folds], rotation=45, ha="right")
    ax.set_ylabel("max deviation |1 - y|")
    ax.set_yscale("log")
    ax.set_title(f"Worst-case deviation per test bearing ({report.mode} features)")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_k_per_fold(report, path: Path) -> None:
    folds = report.folds
    fig, ax = plt.subplots(figsize=(8, 3.5))
    xs = np.arange(len(folds))
    ax.plot(xs, [f.k for f in folds], "o-", color="purple")
    ax.set_xticks(xs)
    ax.set_xticklabels([f.test_label for f in folds], rotation=45, ha="right")
    ax.set_ylabel("calibrated K")
    ax.set_title(f"Per-fold calibrated K ({report.mode} features)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_accuracy_vs_k(curves: dict[str, list[tuple[float, float]]], path: Path) -> None:
    """Step curve(s) of detection accuracy over the K grid."""
    fig, ax = plt.subplots(figsize=(8, 4))
    for label, curve in curves.items():
        ks = [k for k, _ in curve]
        accs = [a for _, a in curve]
        ax.step(ks, accs, where="post", label=label)
    ax.set_xlabel("K")
    ax.set_ylabel("detection accuracy (%)")
    ax.set_ylim(0, 105)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_deviation_traces(report, path: Path) -> None:
    """Grid of per-bearing deviation traces with threshold and convergence marks."""
    folds = report.folds
    ncols = 4
    nrows = int(np.ceil(len(folds) / ncols))
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(4 * ncols, 2.6 * nrows), squeeze=False
    )
    for ax, fold in zip(axes.flat, folds):
        ax.plot(np.arange(1, len(fold.deviations) + 1), fold.deviations, lw=0.7)
        ax.axhline(fold.threshold, color="red", lw=0.8, ls="--")
        ax.axvline(fold.converged_at, color="gray", lw=0.8, ls=":")
        ax.set_title(f"{fold.test_label} [{fold.state}]", fontsize=9)
        ax.set_yscale("log")
    for ax in axes.flat[len(folds) :]:
        ax.axis("off")
    fig.suptitle(f"Deviation traces ({report.mode} features)")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_run_figures(report, fig_dir: Path) -> list[Path]:
    fig_dir = Path(fig_dir)
    fig_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, fn in [
        ("max_deviation.png", lambda p: plot_max_deviations(report, p)),
        ("k_per_fold.png", lambda p: plot_k_per_fold(report, p)),
        (
            "accuracy_vs_k.png",
            lambda p: plot_accuracy_vs_k({report.mode: report.k_curve}, p),
        ),
        ("deviation_traces.png", lambda p: plot_deviation_traces(report, p)),
    ]:
        path = fig_dir / name
        fn(path)
        written.append(path)
    return written
