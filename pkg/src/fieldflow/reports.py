"""Figure rendering for the report paths.

Every plot goes straight to a file next to its CSV; the Agg backend keeps
headless runs and byte-level rerun comparisons working.
"""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": "fieldflow"}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata=_META)
    plt.close(fig)


def scatter_samples(samples, path, *, cloud=None, title="samples"):
    fig, ax = plt.subplots(figsize=(5, 5))
    if cloud is not None:
        ax.scatter(cloud.points[:, 0], cloud.points[:, 1], s=4, c="0.75", label="data")
    ax.scatter(samples[:, 0], samples[:, 1], s=4, c="tab:blue", alpha=0.6, label="generated")
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title(title)
    _save(fig, path)


def loss_curve(trace, path, *, window=100):
    iters = [row[0] for row in trace]
    losses = [row[1] for row in trace]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(iters, losses, lw=0.5, alpha=0.4, label="loss")
    if len(losses) > window:
        smooth = np.convolve(losses, np.ones(window) / window, mode="valid")
        ax.plot(iters[window - 1:], smooth, lw=1.5, label=f"mean({window})")
    ax.set_xlabel("iteration")
    ax.set_ylabel("batch loss")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    _save(fig, path)


def curve_plot(rows, path, *, xlabel, ylabel, logx=True, logy=True, title=None):
    """Generic (x, y) diagnostic curve; non-finite x (the limit row) is dropped."""
    xs = [x for x, _ in rows if math.isfinite(x)]
    ys = [y for x, y in rows if math.isfinite(x)]
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.plot(xs, ys, marker="o")
    limit = [y for x, y in rows if math.isinf(x)]
    if limit:
        ax.axhline(limit[0], color="0.4", ls="--", lw=1, label="limit")
        ax.legend(fontsize=8)
    if logx:
        ax.set_xscale("log", base=2)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    _save(fig, path)


def sweep_plot(rows, path, *, x_key, title):
    """Metric-vs-stress lines, one per model label."""
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    labels = []
    for row in rows:
        if row["label"] not in labels:
            labels.append(row["label"])
    for label in labels:
        pts = [(row[x_key], row["sw"]) for row in rows if row["label"] == label]
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=label)
    ax.set_xlabel(x_key)
    ax.set_ylabel("sliced Wasserstein")
    ax.set_title(title)
    ax.legend(fontsize=8)
    _save(fig, path)
