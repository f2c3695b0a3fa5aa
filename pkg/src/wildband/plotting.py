"""Figures for bands and coverage studies.

Rendering uses the non-interactive Agg backend. PNG metadata is stripped so
the same data always give the same file bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
    "svg.hashsalt": "wildband",
}


def _save(fig, path):
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def _steps(ax, t, y, **kw):
    ax.step(t, y, where="post", **kw)


def plot_band(band, path, truth=None, title=None):
    """Estimate, simultaneous band and pointwise limits as step curves."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        _steps(ax, band.grid, band.estimate, color="k", label="estimate")
        _steps(ax, band.grid, band.lower, color="C0", label="simultaneous band")
        _steps(ax, band.grid, band.upper, color="C0")
        if band.pointwise_lower is not None:
            _steps(ax, band.grid, band.pointwise_lower, color="C1", ls="--", label="pointwise")
            _steps(ax, band.grid, band.pointwise_upper, color="C1", ls="--")
        if truth is not None:
            t = np.linspace(band.grid[0], band.grid[-1], 200)
            ax.plot(t, truth(t), color="C3", ls=":", label="truth")
        ax.set_xlabel("time")
        ax.set_ylabel("survival probability" if band.scale == "survival" else "cumulative hazard")
        if band.scale == "survival":
            ax.set_ylim(0.0, 1.0)
        spec = band.spec
        ax.set_title(title or f"{spec.weight.value.upper()} {spec.transform.value} band, "
                              f"level {1 - spec.alpha:g}")
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)


def plot_coverage(result, path):
    """Coverage per variant with +/- 2 Monte Carlo standard errors."""
    cells = result.cells
    labels = ["/".join((c.multiplier, c.scheme, c.increments, c.weight, c.transform)) for c in cells]
    cov = np.array([c.coverage for c in cells]) * 100
    se = np.array([c.mc_se for c in cells]) * 100
    nominal = 100 * (1 - cells[0].alpha) if cells else 95.0
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 0.3 * len(cells) + 1.2))
        y = np.arange(len(cells))
        ax.errorbar(cov, y, xerr=2 * se, fmt="o", color="k", ms=3, capsize=2)
        ax.axvline(nominal, color="C3", ls=":")
        ax.set_yticks(y)
        ax.set_yticklabels(labels)
        ax.invert_yaxis()
        ax.set_xlabel("coverage (%)")
        ax.set_title(f"n = {result.config.n}, R = {result.R}")
        fig.tight_layout()
        _save(fig, path)
