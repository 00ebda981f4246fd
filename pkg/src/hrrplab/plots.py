"""Headless matplotlib figures rendered next to the delimited outputs.

Every report-style CLI path (analyze, train, evaluate) drops a PNG beside its
CSV so a run directory is inspectable without loading anything into a
notebook. All figures use the Agg backend; nothing here ever opens a window.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from hrrplab.core import RangeProfile  # noqa: E402


def plot_extent_curve(aspects: np.ndarray, lrp_m: np.ndarray,
                      tlop_m: np.ndarray, title: str, r_value: float,
                      out_path: str | Path) -> Path:
    """Measured range extent vs. aspect angle against the projection model."""
    order = np.argsort(aspects)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(np.asarray(aspects)[order], np.asarray(tlop_m)[order],
            color="tab:orange", lw=1.5, label="projected extent")
    ax.scatter(aspects, lrp_m, s=8, color="tab:blue", alpha=0.6,
               label="measured extent")
    ax.set_xlabel("aspect angle (deg)")
    ax.set_ylabel("extent (m)")
    ax.set_title(f"{title}  (r = {r_value:.3f})")
    ax.legend(loc="upper right")
    fig.tight_layout()
    out = Path(out_path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def plot_loss_columns(steps: np.ndarray, columns: dict[str, np.ndarray],
                      title: str, out_path: str | Path) -> Path:
    """One loss curve per named column on a shared step axis."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for name, values in columns.items():
        ax.plot(steps, values, lw=1.0, label=name)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title(title)
    if len(columns) > 1:
        ax.legend(loc="upper right")
    fig.tight_layout()
    out = Path(out_path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def plot_profile_pairs(pairs: list[tuple[RangeProfile, RangeProfile, str]],
                       out_path: str | Path, max_pairs: int = 6) -> Path:
    """Overlay generated profiles with their best real matches."""
    pairs = pairs[:max_pairs]
    n = max(len(pairs), 1)
    fig, axes = plt.subplots(n, 1, figsize=(7, 1.8 * n), squeeze=False)
    for ax, (gen, real, label) in zip(axes[:, 0], pairs):
        grid = np.arange(gen.n_bins) * gen.delta_r
        ax.plot(grid, real.amplitudes, color="0.4", lw=1.0, label="real")
        ax.plot(grid, gen.amplitudes, color="tab:red", lw=1.0, alpha=0.8,
                label="generated")
        ax.set_ylabel("amp")
        ax.set_title(label, fontsize=8)
    axes[-1, 0].set_xlabel("range (m)")
    axes[0, 0].legend(loc="upper right", fontsize=7)
    fig.tight_layout()
    out = Path(out_path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
