"""Optional PNG figures written next to the CSV outputs.

matplotlib is imported lazily; without it the figure step is skipped with a
warning and the delimited outputs are unaffected.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


def _pyplot():
    try:
        import matplotlib
    except ImportError:
        log.warning("matplotlib not installed; figures skipped")
        return None
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _save(plt, fig, path):
    fig.tight_layout()
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def plot_series(path, times_h, series, ylabel, title=None):
    """Line plot of ``{label: values}`` against time in hours."""
    plt = _pyplot()
    if plt is None:
        return None
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, y in series.items():
        ax.plot(times_h, y, label=label)
    ax.set_xlabel("t [h]")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    ax.grid(alpha=0.3)
    return _save(plt, fig, path)


def plot_field(path, x, t_h, values, xlabel="x", ylabel="t [h]", clabel="T [degC]"):
    """Colour map of a ``values[x, t]`` field."""
    plt = _pyplot()
    if plt is None:
        return None
    fig, ax = plt.subplots(figsize=(6, 3.5))
    m = ax.pcolormesh(np.asarray(x), np.asarray(t_h), np.asarray(values).T, shading="auto")
    fig.colorbar(m, ax=ax, label=clabel)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return _save(plt, fig, path)


def plot_chain(path, chain, stats):
    """Trace and histogram of each parameter."""
    plt = _pyplot()
    if plt is None:
        return None
    names = ("h_t", "R_l")
    cols = [k for k in range(2) if np.all(np.isfinite(chain.states[:, k]))]
    fig, axes = plt.subplots(len(cols), 2, figsize=(8, 3 * len(cols)), squeeze=False)
    for row, k in enumerate(cols):
        axes[row, 0].plot(chain.states[:, k], lw=0.5)
        axes[row, 0].axvline(chain.burn_in, color="k", ls="--", lw=0.8)
        axes[row, 0].set_ylabel(names[k])
        axes[row, 0].set_xlabel("state")
        counts, edges = stats.histograms[k]
        axes[row, 1].stairs(counts, edges, fill=True)
        axes[row, 1].set_xlabel(names[k])
    return _save(plt, fig, path)
