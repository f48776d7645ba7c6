"""Figures for the CLI reports.

Figures are drawn on the Agg canvas without touching pyplot state, and PNG
metadata is stripped so identical inputs give byte-identical files.
"""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

_PNG_META = {"Software": None}


def _save(fig, path):
    FigureCanvasAgg(fig)
    fig.savefig(path, format="png", dpi=100, metadata=_PNG_META)


def plot_curves(curves, path, title="", xlabel="step", ylabel=""):
    """One line per named curve, all on a shared axis."""
    fig = Figure(figsize=(6.4, 4.0))
    ax = fig.add_subplot()
    for name, ys in curves.items():
        ax.plot(np.arange(len(ys)), np.asarray(ys, dtype=float), label=name, linewidth=1.2)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(curves) > 1:
        ax.legend(fontsize="small")
    fig.tight_layout()
    _save(fig, path)


def plot_bars(labels, values, path, title="", ylabel=""):
    fig = Figure(figsize=(6.4, 4.0))
    ax = fig.add_subplot()
    x = np.arange(len(values))
    ax.bar(x, np.asarray(values, dtype=float))
    ax.set_xticks(x, labels, rotation=45, ha="right", fontsize="small")
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    _save(fig, path)


def plot_estimate(running, reference, path, title=""):
    """Running Monte-Carlo estimate against its closed-form reference."""
    fig = Figure(figsize=(6.4, 4.0))
    ax = fig.add_subplot()
    n = np.arange(1, len(running) + 1)
    ax.plot(n, running, linewidth=1.0, label="Monte Carlo")
    ax.axhline(reference, color="k", linestyle="--", linewidth=1.0, label="closed form")
    ax.set_xscale("log")
    ax.set_xlabel("samples")
    ax.set_ylabel("log evidence ratio")
    ax.set_title(title)
    ax.legend(fontsize="small")
    fig.tight_layout()
    _save(fig, path)
