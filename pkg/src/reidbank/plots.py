"""Figure rendering for the report paths; all figures are written to files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def save_cmc_curves(curves: dict[str, dict[int, float]], path) -> Path:
    """One line per model: CMC-k accuracy against k."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for name, acc in curves.items():
        ks = sorted(acc)
        ax.plot(ks, [acc[k] for k in ks], marker="o", label=name)
    ax.set_xlabel("rank k")
    ax.set_ylabel("CMC-k accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_psnr_trend(encoding_steps, mean_psnr, path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.plot(list(encoding_steps), list(mean_psnr), marker="s", color="tab:purple")
    ax.set_xlabel("encoding steps")
    ax.set_ylabel("mean PSNR vs source (dB)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_label_histogram(counts: dict[int, int], highlighted, path) -> Path:
    """Predicted-label counts with the selected condition labels marked."""
    path = Path(path)
    labels = sorted(counts)
    values = [counts[lab] for lab in labels]
    colors = ["tab:orange" if lab in set(highlighted) else "tab:blue" for lab in labels]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.bar([str(lab) for lab in labels], values, color=colors)
    ax.set_xlabel("predicted illumination label")
    ax.set_ylabel("target samples")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
