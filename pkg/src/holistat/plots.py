"""Static SVG figures.  Each figure is written next to a CSV with the same numbers."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

plt.rcParams["svg.hashsalt"] = "holistat"
plt.rcParams["svg.fonttype"] = "none"

INTENSITY_COLORS = ["#ffffcc", "#a1dab4", "#41b6c4", "#2c7fb8", "#253494"]
MISSING_COLOR = "#bdbdbd"


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def ecdf_svg(path, values, fractions, xlabel, title=None):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.step(values, fractions, where="post")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("ECDF")
    ax.set_ylim(0, 1.02)
    if values and min(values) > 0 and max(values) / min(values) > 100:
        ax.set_xscale("log")
    if title:
        ax.set_title(title)
    _save(fig, path)


def bar_svg(path, labels, heights, xlabel, ylabel, title=None):
    fig, ax = plt.subplots(figsize=(max(4, 0.25 * len(labels)), 3.5))
    ax.bar(range(len(labels)), heights)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels([str(x) for x in labels], rotation=90 if len(labels) > 12 else 0, fontsize=7)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    _save(fig, path)


def stacked_bar_svg(path, labels, stacks, ylabel, title=None):
    """``stacks`` maps series name -> per-label heights."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    bottom = [0.0] * len(labels)
    for name, heights in stacks.items():
        ax.bar(range(len(labels)), heights, bottom=bottom, label=name)
        bottom = [b + h for b, h in zip(bottom, heights)]
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=6)
    if title:
        ax.set_title(title)
    _save(fig, path)


def line_svg(path, xs, series, xlabel, ylabel, title=None):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for name, ys in series.items():
        ax.plot(xs, ys, label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend(fontsize=6)
    if title:
        ax.set_title(title)
    _save(fig, path)


def heatmap_svg(path, row_labels, cells, title=None):
    """``cells[r][h]`` is an intensity class index 0-4 or ``None`` (grey)."""
    import numpy as np

    n_cols = max((len(r) for r in cells), default=0)
    grid = np.full((len(cells), n_cols), -1.0)
    for i, row in enumerate(cells):
        for j, c in enumerate(row):
            grid[i, j] = -1 if c is None else int(c)
    cmap = ListedColormap([MISSING_COLOR] + INTENSITY_COLORS)
    fig, ax = plt.subplots(figsize=(8, 0.5 + 0.4 * len(cells)))
    ax.imshow(grid, aspect="auto", cmap=cmap, vmin=-1.5, vmax=4.5, interpolation="nearest")
    ax.set_yticks(range(len(row_labels)))
    ax.set_yticklabels(row_labels, fontsize=7)
    ax.set_xlabel("hour")
    if title:
        ax.set_title(title)
    _save(fig, path)
