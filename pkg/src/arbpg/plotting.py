"""Figures written next to the CSV/JSON reports.

Uses the object-oriented matplotlib API (``Figure`` + Agg canvas) so nothing
touches pyplot's global state; safe to call from worker processes.
"""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

CHANNEL_COLORS = {"red": "tab:red", "green": "tab:green", "blue": "tab:blue", "gray": "0.3"}


def _new_figure(width=6.0, height=4.0):
    fig = Figure(figsize=(width, height), dpi=100)
    FigureCanvasAgg(fig)
    return fig


def _save(fig, path):
    # fixed metadata keeps repeated runs byte-stable
    fig.savefig(path, metadata={"Software": None})


def plot_convergence(series, path, title=None):
    """Objective value against iteration, one line per labelled trace.

    ``series`` maps a label to a list of iteration records.
    """
    fig = _new_figure()
    ax = fig.add_subplot(1, 1, 1)
    for label, records in series.items():
        if not records:
            continue
        k = np.array([r.k + 1 for r in records])
        phi = np.array([r.phi for r in records])
        ax.semilogy(k, np.maximum(phi, np.finfo(float).tiny), label=label,
                    color=CHANNEL_COLORS.get(label), lw=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel(r"$\varphi(x^k)$")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)


def plot_stepsizes(series, path):
    """Accepted proximal stepsize per iteration (log scale)."""
    fig = _new_figure()
    ax = fig.add_subplot(1, 1, 1)
    for label, records in series.items():
        if records:
            ax.semilogy([r.k + 1 for r in records], [r.tau for r in records], ".", ms=2,
                        label=label, color=CHANNEL_COLORS.get(label))
    ax.set_xlabel("iteration")
    ax.set_ylabel(r"accepted $\tau_k$")
    ax.legend(frameon=False, markerscale=4)
    fig.tight_layout()
    _save(fig, path)


def plot_reconstruction(original, reconstructed, path, title=None):
    """Side-by-side original and compressed image (uint8 arrays)."""
    fig = _new_figure(8.0, 3.6)
    for idx, (img, name) in enumerate(((original, "original"), (reconstructed, "reconstruction"))):
        ax = fig.add_subplot(1, 2, idx + 1)
        if img.ndim == 2:
            ax.imshow(img, cmap="gray", vmin=0, vmax=255)
        else:
            ax.imshow(img)
        ax.set_title(name)
        ax.set_axis_off()
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    _save(fig, path)


def plot_comparison(rows, series, path):
    """Bars of the final objective plus the objective trajectories of each run."""
    fig = _new_figure(9.0, 3.8)
    ax1 = fig.add_subplot(1, 2, 1)
    labels = [r["label"] for r in rows]
    ax1.bar(range(len(rows)), [r["phi_final"] for r in rows], color="0.5")
    ax1.set_xticks(range(len(rows)))
    ax1.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax1.set_ylabel(r"avg $\varphi(U^{out}, V^{out})$")
    ax2 = fig.add_subplot(1, 2, 2)
    for label, records in series.items():
        if records:
            ax2.semilogy([r.k + 1 for r in records], [max(r.phi, 1e-300) for r in records],
                         label=label, lw=1)
    ax2.set_xlabel("iteration")
    ax2.legend(frameon=False, fontsize=7)
    fig.tight_layout()
    _save(fig, path)
