"""Figures for curve and sweep reports, rendered off-screen to files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_rd_curve(curve, path, gaussian_sigma: float | None = None) -> Path:
    """Rate against distortion, optionally overlaid with sigma^2 2^(-2R)."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(curve.distortions, curve.rates, ".-", ms=3, label="Blahut-Arimoto")
    if gaussian_sigma is not None:
        r = np.linspace(0.0, max(curve.rates.max(), 1e-3), 200)
        ax.plot(gaussian_sigma**2 * 2.0 ** (-2 * r), r, "--", label=r"$\sigma^2 2^{-2R}$")
    ax.set_xlabel("distortion D")
    ax.set_ylabel("rate R (bits)")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_sweep(aggregates, path) -> Path:
    """Mean root risk with 2-SE bars against rate, next to sigma*(1 + 2^(1-R))."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for n in sorted({a["n"] for a in aggregates}):
        rows = sorted((a for a in aggregates if a["n"] == n), key=lambda a: a["rate"])
        rates = [a["rate"] for a in rows]
        se = np.nan_to_num([a["se_sqrt_risk"] for a in rows])
        ax.errorbar(rates, [a["mean_sqrt_risk"] for a in rows], yerr=2 * se, fmt="o-", capsize=3, label=f"n={n}")
    rows = sorted({a["rate"]: a["theorem3_bound"] for a in aggregates}.items())
    ax.plot([r for r, _ in rows], [b for _, b in rows], "k--", label="bound")
    ax.set_xlabel("rate R (bits/sample)")
    ax.set_ylabel(r"$E\,L(\hat f_n)^{1/2}$")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
