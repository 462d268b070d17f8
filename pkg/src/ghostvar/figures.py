"""Matplotlib renderings of relevance reports, saved as SVG files.

Figures are run artifacts, not an interactive UI: bars for per-variable
relevance (with the critical-value line where it applies), eigenvalue
bars with explained fractions, one panel of component bars per retained
eigenvector, and the variable-clustering dendrogram.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import scipy.cluster.hierarchy


def _finish(fig, path):
    suffix = str(path).rsplit(".", 1)
    fmt = suffix[1] if len(suffix) == 2 else "svg"
    fig.savefig(path, format=fmt)
    plt.close(fig)


def _maybe_thin_labels(ax, names):
    if len(names) > 30:
        ax.set_xticks([])
        ax.set_xlabel(f"{len(names)} variables in column order")
    else:
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)


def save_relevance_bars(names, values, crit, path, title):
    fig, ax = plt.subplots(figsize=(max(6, min(12, 0.3 * len(names))), 4))
    ax.bar(range(len(names)), values, color="#4878d0")
    if crit is not None:
        ax.axhline(crit, color="tab:blue", linestyle="--", linewidth=1, label="critical value")
        ax.legend(fontsize=8)
    ax.axhline(0.0, color="tab:red", linestyle=":", linewidth=0.8)
    _maybe_thin_labels(ax, names)
    ax.set_ylabel("relevance")
    ax.set_title(title)
    fig.tight_layout()
    _finish(fig, path)


def save_eigenvalue_bars(eigenvalues, fractions, path, title):
    n = len(eigenvalues)
    fig, ax = plt.subplots(figsize=(max(6, min(12, 0.3 * n)), 4))
    ax.bar(range(1, n + 1), eigenvalues, color="#4878d0")
    if n > 30:
        ax.set_yscale("symlog", linthresh=max(1e-12, float(np.max(eigenvalues)) * 1e-6))
    for i, frac in enumerate(fractions[: min(n, 12)]):
        if frac >= 0.01:
            ax.text(
                i + 1,
                eigenvalues[i],
                f"{100 * frac:.0f}%",
                ha="center",
                va="bottom",
                fontsize=7,
            )
    ax.set_xlabel("component")
    ax.set_ylabel("eigenvalue")
    ax.set_title(title)
    fig.tight_layout()
    _finish(fig, path)


def save_eigenvector_panels(components, names, path, title):
    k = len(components)
    cols = min(3, k)
    rows = math.ceil(k / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(4.5 * cols, 2.8 * rows), squeeze=False)
    for i, comp in enumerate(components):
        ax = axes[i // cols][i % cols]
        ax.bar(range(len(names)), comp.vector, color="#4878d0")
        ax.axhline(0.0, color="tab:red", linestyle=":", linewidth=0.8)
        _maybe_thin_labels(ax, names)
        ax.set_title(f"eigenvector {i + 1} ({100 * comp.fraction:.1f}%)", fontsize=9)
    for i in range(k, rows * cols):
        axes[i // cols][i % cols].set_visible(False)
    fig.suptitle(title)
    fig.tight_layout()
    _finish(fig, path)


def save_dendrogram(tree, path, title):
    p = len(tree.variable_names)
    fig, ax = plt.subplots(figsize=(max(6, min(14, 0.25 * p)), 4))
    scipy.cluster.hierarchy.dendrogram(
        tree.merges,
        labels=list(tree.variable_names),
        ax=ax,
        no_labels=p > 40,
        color_threshold=None,
    )
    if p <= 40:
        ax.tick_params(axis="x", labelsize=7, labelrotation=90)
    ax.set_ylabel("merge height")
    ax.set_title(title)
    fig.tight_layout()
    _finish(fig, path)
