"""Figures for solve reports, rendered off-screen to image files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_solution(path, residuals, filename, title=None, reference=None):
    """Trajectory components (top) and interval residuals on a log scale (bottom).

    ``reference`` is an optional Path drawn dashed for comparison.
    """
    g = path.grid
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True,
                                   gridspec_kw={"height_ratios": [2, 1]})
    for k in range(g.d):
        ax1.plot(g.times, path.nodes[:, k], lw=1.4, label=f"x{k + 1}")
        if reference is not None:
            ax1.plot(g.times, reference.nodes[:, k], "k--", lw=0.8)
    ax1.set_ylabel("state")
    if g.d <= 8:
        ax1.legend(loc="best", fontsize=8)
    if title:
        ax1.set_title(title)
    r = np.maximum(np.asarray(residuals, dtype=float), 1e-300)
    finite = np.isfinite(r)
    ax2.semilogy(g.midtimes[finite], r[finite], ".", ms=2)
    ax2.set_xlabel("t")
    ax2.set_ylabel("interval residual")
    fig.tight_layout()
    fig.savefig(filename, dpi=120)
    plt.close(fig)
    return filename
