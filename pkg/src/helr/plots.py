"""Figure rendering for the report paths (DET curves, benchmark timings).

Figures land next to the delimited output; the CSV stays the canonical
machine-readable form.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .classifier import DetMetrics


def save_det_figure(metrics: DetMetrics, path, title: str = "DET curve"):
    fig, ax = plt.subplots(figsize=(5.5, 5))
    fmr = np.clip(metrics.fmr, 1e-6, 1.0)
    fnmr = np.clip(metrics.fnmr, 1e-6, 1.0)
    ax.plot(fmr * 100, fnmr * 100, lw=1.5)
    ax.plot([metrics.eer * 100], [metrics.eer * 100], "o", ms=6,
            label=f"EER = {metrics.eer * 100:.2f}%")
    ax.plot([1e-4, 100], [1e-4, 100], ":", color="grey", lw=0.8)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("FMR (%)")
    ax.set_ylabel("FNMR (%)")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_score_figure(genuine, impostor, theta, path, title: str = "Score distributions"):
    fig, ax = plt.subplots(figsize=(6, 4))
    bins = np.histogram_bin_edges(np.concatenate([genuine, impostor]), bins=60)
    ax.hist(impostor, bins=bins, alpha=0.6, label="impostor", density=True)
    ax.hist(genuine, bins=bins, alpha=0.6, label="genuine", density=True)
    ax.axvline(theta, color="k", ls="--", lw=1, label=f"threshold = {theta}")
    ax.set_xlabel("final score")
    ax.set_ylabel("density")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_bench_figure(results, path, title: str = "Verification runtime"):
    fig, ax = plt.subplots(figsize=(6, 4))
    data = [np.asarray(r.times) for r in results]
    labels = [f"{r.protocol}\nlevel {r.level}" for r in results]
    ax.boxplot(data, tick_labels=labels, showfliers=True)
    ax.set_ylabel("seconds per verification")
    ax.set_title(title)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
