"""Matplotlib figures for marginal reports: mean error, variance error and KL vs t.

Figures are written straight to files with the Agg backend; nothing is shown.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import numpy as np

from .stats import MarginalReport

__all__ = ["plot_report", "plot_reports"]


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _draw(axes, report: MarginalReport, label=None, color=None):
    t = report.times
    ax_m, ax_v, ax_k = axes
    for ax, err, std in ((ax_m, report.pooled_mean_err, report.pooled_mean_std),
                         (ax_v, report.pooled_var_err, report.pooled_var_std)):
        line, = ax.plot(t, err, label=label, color=color, lw=1.2)
        ax.fill_between(t, err - std, err + std, color=line.get_color(), alpha=0.2, lw=0)
    kl = np.where(np.isfinite(report.kl), report.kl, np.nan)
    ax_k.plot(t, np.maximum(kl, 1e-12), label=label, color=color, lw=1.2)


def _finish(fig, axes, path, title):
    ax_m, ax_v, ax_k = axes
    for ax in axes:
        ax.set_xlim(1, 0)
        ax.set_xlabel("t")
        ax.grid(alpha=0.3)
    for ax in (ax_m, ax_v):
        ax.axhline(0.0, color="k", lw=0.6)
    ax_m.set_title("mean error (estimate - truth)")
    ax_v.set_title("variance error (estimate - truth)")
    ax_k.set_title("KL to true marginal")
    ax_k.set_yscale("log")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    return path


def plot_report(report: MarginalReport, path, title: str = "") -> Path:
    """One report; shaded bands are +-1 cross-trial std."""
    plt = _pyplot()
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.8))
    _draw(axes, report)
    out = _finish(fig, axes, path, title)
    plt.close(fig)
    return out


def plot_reports(reports: Mapping[str, MarginalReport], path, title: str = "") -> Path:
    """Overlay several labelled reports, e.g. an alpha or step-count sweep."""
    plt = _pyplot()
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.8))
    cmap = plt.get_cmap("viridis")
    n = max(len(reports) - 1, 1)
    for i, (label, rep) in enumerate(reports.items()):
        _draw(axes, rep, label=label, color=cmap(i / n))
    axes[2].legend(fontsize=8, loc="best")
    out = _finish(fig, axes, path, title)
    plt.close(fig)
    return out
