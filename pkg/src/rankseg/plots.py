"""Figure rendering for pipeline outputs.

Every function takes already-computed results and a target path, renders
with the Agg backend, and writes a PNG. Fixed figure sizes, dpi and
metadata keep the bytes reproducible for identical inputs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE = {"dpi": 130, "metadata": {"Software": "rankseg"}}


def _finish(fig, path):
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def plot_mds(embedding, labels, path) -> None:
    """Scatter of the 2-d principal coordinates, colored by cluster."""
    labels = np.asarray(labels)
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    for lab in np.unique(labels):
        pts = embedding.coords[labels == lab]
        ax.scatter(pts[:, 0], pts[:, 1], s=18, label=f"cluster {lab}", alpha=0.8)
    ax.set_xlabel("coordinate 1")
    ax.set_ylabel("coordinate 2")
    ax.set_title("distance map")
    ax.legend(fontsize=8, loc="best")
    fig.tight_layout()
    _finish(fig, path)


def plot_validation_path(per_g, path) -> None:
    """Average silhouette width and distance correlation across cluster counts."""
    gs = sorted(per_g)
    asw_vals = [per_g[g]["asw"] for g in gs]
    pg_vals = [per_g[g]["pearson_gamma"] for g in gs]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(gs, asw_vals, marker="o", label="average silhouette width")
    if all(v is not None for v in pg_vals):
        ax.plot(gs, pg_vals, marker="s", label="distance correlation")
    ax.set_xlabel("number of clusters")
    ax.set_ylabel("score")
    ax.set_xticks(gs)
    ax.set_title("partition quality")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _finish(fig, path)


def plot_cluster_sizes(solution, path) -> None:
    """Bar chart of cluster sizes for one solution."""
    sizes: dict[int, int] = {}
    for lab in solution.labels:
        sizes[int(lab)] = sizes.get(int(lab), 0) + 1
    labs = sorted(sizes)
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.bar([str(l) for l in labs], [sizes[l] for l in labs])
    ax.set_xlabel("cluster")
    ax.set_ylabel("respondents")
    ax.set_title(f"cluster sizes (g = {solution.g})")
    fig.tight_layout()
    _finish(fig, path)


def plot_distance_heatmap(dmat, labels, path) -> None:
    """Distance matrix with rows and columns grouped by cluster."""
    labels = np.asarray(labels)
    order = np.argsort(labels, kind="stable")
    values = np.asarray(dmat.values, dtype=np.float64)[np.ix_(order, order)]
    fig, ax = plt.subplots(figsize=(5.5, 5.0))
    im = ax.imshow(values, cmap="viridis", interpolation="nearest")
    fig.colorbar(im, ax=ax, shrink=0.8, label="distance")
    ax.set_title("pairwise distances, grouped by cluster")
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    _finish(fig, path)


def plot_pvalue_path(per_g, path) -> None:
    """Block-test p-values across cluster counts, log scale."""
    gs = sorted(per_g)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for key, style in (("block:personality", "o-"), ("block:sociodemographic", "s-")):
        xs, ys = [], []
        for g in gs:
            block = per_g[g].get("mlr", {})
            tests = block.get("tests", {})
            if key in tests:
                xs.append(g)
                ys.append(max(tests[key]["p_value"], 1e-300))
        if xs:
            ax.plot(xs, ys, style, label=key.split(":", 1)[1])
    ax.axhline(0.01, color="gray", linestyle="--", linewidth=1, label="0.01")
    ax.set_yscale("log")
    ax.set_xlabel("number of clusters")
    ax.set_ylabel("p-value")
    ax.set_xticks(gs)
    ax.set_title("variable-block tests by granularity")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _finish(fig, path)


def plot_importance(importances, path) -> None:
    """Horizontal bars of forest importances, largest on top."""
    names = sorted(importances, key=lambda k: importances[k])
    vals = [importances[k] for k in names]
    fig, ax = plt.subplots(figsize=(6.0, 0.4 * max(len(names), 4) + 1.2))
    ax.barh(names, vals)
    ax.set_xlabel("mean decrease in out-of-bag accuracy")
    ax.set_title("variable importance")
    fig.tight_layout()
    _finish(fig, path)
