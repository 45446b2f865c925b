"""Curve figures written next to the sweep CSVs (non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

AXIS_LABELS = {"m": "measurements m", "factor": "downsampling factor", "R": "acceleration R",
               "nfe": "function evaluations", "p": "erasure probability"}


def plot_curve(rows, axis: str, path, metrics=("mse", "nrmse", "psnr", "ssim"), title: str = "") -> Path:
    """Mean with a one-standard-deviation band for each metric, one panel each.

    PNG metadata is stripped so identical data give identical bytes.
    """
    x = [r["value"] for r in rows]
    fig, axes = plt.subplots(1, len(metrics), figsize=(3.2 * len(metrics), 2.8), squeeze=False)
    for ax, name in zip(axes[0], metrics):
        mean = [r[f"{name}_mean"] for r in rows]
        std = [r[f"{name}_std"] for r in rows]
        ax.errorbar(x, mean, yerr=std, marker="o", ms=3, capsize=3, lw=1)
        ax.set_xlabel(AXIS_LABELS.get(axis, axis))
        ax.set_ylabel(name.upper())
        ax.grid(alpha=0.3)
    if title:
        fig.suptitle(title, fontsize=9)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path
