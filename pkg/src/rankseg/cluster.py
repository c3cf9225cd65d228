"""Partitioning around medoids, hierarchical baselines, and partition scores.

PAM here is fully deterministic: greedy BUILD, then best-improvement SWAP
with ties broken by (improvement, medoid index, candidate index). Labels are
1..G, numbered by ascending medoid observation index. An optional seeded
random-restart mode keeps the deterministic run and returns the best
objective found.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.cluster.hierarchy import linkage as _scipy_linkage

from .distance import DistanceMatrix


def _as_square(d) -> np.ndarray:
    values = d.values if isinstance(d, DistanceMatrix) else np.asarray(d)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError("expected a square distance matrix")
    return values


def _ids_of(d, n: int) -> tuple[str, ...]:
    if isinstance(d, DistanceMatrix):
        return d.ids
    return tuple(str(i) for i in range(n))


@dataclass(frozen=True)
class ClusterSolution:
    """A medoid partition: labels 1..g, medoid indices, and the objective.

    ``objective`` is the total distance of every observation to its cluster
    medoid; exact (integer) when the distances are.
    """

    labels: np.ndarray
    medoids: tuple[int, ...]
    g: int
    objective: float
    ids: tuple[str, ...]
    swap_iterations: int = 0
    restarts: int = 0

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "medoids", tuple(int(m) for m in self.medoids))

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    def medoid_ids(self) -> tuple[str, ...]:
        return tuple(self.ids[m] for m in self.medoids)

    def members(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


def _assign(values: np.ndarray, medoids: np.ndarray):
    """Labels 1..g by nearest medoid; ties go to the lower medoid index."""
    cols = values[:, medoids]
    which = np.argmin(cols, axis=1)  # first minimum wins; medoids sorted
    # A medoid anchors its own cluster even when another medoid sits at
    # distance zero (duplicate points), so no cluster can come back empty.
    which[medoids] = np.arange(medoids.shape[0])
    labels = which + 1
    dnear = cols[np.arange(values.shape[0]), which]
    return labels.astype(np.int64), dnear


def _build(values: np.ndarray, g: int) -> list[int]:
    n = values.shape[0]
    totals = values.sum(axis=1)
    first = int(np.argmin(totals))  # argmin takes the lowest index on ties
    medoids = [first]
    dnear = values[:, first].copy()
    while len(medoids) < g:
        gains = np.maximum(dnear[:, None] - values, 0).sum(axis=0)
        gains[medoids] = -1  # a chosen medoid gains nothing and is ineligible
        nxt = int(np.argmax(gains))
        medoids.append(nxt)
        np.minimum(dnear, values[:, nxt], out=dnear)
    return medoids


def _swap_deltas(values: np.ndarray, medoids: np.ndarray, dnear, dsecond, nearest):
    """Improvement matrix: rows = medoids to remove, cols = candidates to add."""
    base = (np.minimum(values, dnear[:, None]) - dnear[:, None]).sum(axis=0)
    deltas = np.empty((medoids.shape[0], values.shape[0]), dtype=base.dtype)
    for ki, k in enumerate(medoids):
        rows = np.flatnonzero(nearest == k)
        sub = values[rows]
        corr = np.minimum(sub, dsecond[rows, None]) - np.minimum(sub, dnear[rows, None])
        deltas[ki] = base + corr.sum(axis=0)
    return deltas


def _pam_run(values: np.ndarray, start: list[int], g: int, max_swaps: int):
    n = values.shape[0]
    medoids = np.array(sorted(start), dtype=np.int64)
    sweeps = 0
    for _ in range(max_swaps):
        cols = values[:, medoids]
        order = np.argsort(cols, axis=1, kind="stable")
        nearest = medoids[order[:, 0]]
        dnear = cols[np.arange(n), order[:, 0]]
        if g > 1:
            dsecond = cols[np.arange(n), order[:, 1]]
        else:
            dsecond = np.full(n, np.max(values) + 1, dtype=cols.dtype)
        deltas = _swap_deltas(values, medoids, dnear, dsecond, nearest)
        deltas[:, medoids] = 0  # adding an existing medoid is not a move
        best = deltas.min()
        if not best < 0:
            break
        ki, c = np.unravel_index(int(np.argmin(deltas, axis=None)), deltas.shape)
        # argmin scans row-major: ties resolve to the lowest medoid slot
        # (medoids are sorted, so lowest observation index), then lowest
        # candidate index.
        medoids[ki] = c
        medoids = np.sort(medoids)
        sweeps += 1
    labels, dnear = _assign(values, medoids)
    objective = dnear.sum()
    return medoids, labels, objective, sweeps


def pam(
    d,
    g: int,
    restarts: int = 0,
    seed: int | None = None,
    max_swaps: int = 10_000,
) -> ClusterSolution:
    """Partitioning around medoids for a fixed number of clusters.

    Args:
        d: :class:`DistanceMatrix` or square array.
        g: number of clusters, 2 <= g <= n.
        restarts: additional runs from seeded random initial medoids; the
            best objective wins, with the deterministic run preferred on
            ties. 0 keeps the canonical deterministic result.
        seed: seed for the restart draws (required when restarts > 0).
        max_swaps: safety cap on swap steps.

    Returns:
        :class:`ClusterSolution` with labels 1..g numbered by ascending
        medoid observation index.
    """
    values = _as_square(d)
    n = values.shape[0]
    if not 2 <= g <= n:
        raise ValueError(f"g={g} must be in 2..{n}")
    if restarts < 0:
        raise ValueError("restarts must be >= 0")
    if restarts > 0 and seed is None:
        raise ValueError("random restarts need a seed")

    medoids, labels, objective, sweeps = _pam_run(values, _build(values, g), g, max_swaps)
    if restarts > 0:
        rng = np.random.default_rng(seed)
        for _ in range(restarts):
            start = rng.choice(n, size=g, replace=False).tolist()
            cand = _pam_run(values, start, g, max_swaps)
            if cand[2] < objective:
                medoids, labels, objective, sweeps = cand

    return ClusterSolution(
        labels=labels,
        medoids=tuple(int(m) for m in medoids),
        g=g,
        objective=objective.item(),
        ids=_ids_of(d, n),
        swap_iterations=sweeps,
        restarts=restarts,
    )


def solution_path(d, g_min: int = 2, g_max: int = 10, **kwargs) -> dict[int, ClusterSolution]:
    """PAM solutions keyed by cluster count, for every g in [g_min, g_max]."""
    if g_min < 2 or g_max < g_min:
        raise ValueError(f"invalid range g_min={g_min}, g_max={g_max}")
    return {g: pam(d, g, **kwargs) for g in range(g_min, g_max + 1)}


@dataclass(frozen=True)
class LinkagePartition:
    """A hierarchical-clustering cut: labels 1..g, the method used, and the
    average within-cluster distance as the comparison objective."""

    labels: np.ndarray
    g: int
    method: str
    ids: tuple[str, ...]
    objective: float = 0.0

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)


def _renumber(labels: np.ndarray) -> np.ndarray:
    """Relabel to 1..g by ascending first (smallest) member index."""
    out = np.zeros_like(labels)
    nxt = 1
    for i in range(labels.shape[0]):
        if out[i] == 0:
            out[labels == labels[i]] = nxt
            nxt += 1
    return out


def linkage_cut(d, g: int, method: str = "average") -> LinkagePartition:
    """Cut an agglomerative tree to exactly g clusters.

    The first n - g merges of the linkage are applied, so the result always
    has exactly g clusters regardless of tied merge heights.

    Args:
        d: :class:`DistanceMatrix` or square array.
        g: number of clusters.
        method: linkage rule, "average" or "complete".
    """
    if method not in ("average", "complete"):
        raise ValueError(f"unsupported linkage method {method!r}")
    values = _as_square(d).astype(np.float64)
    n = values.shape[0]
    if not 1 <= g <= n:
        raise ValueError(f"g={g} must be in 1..{n}")
    iu = np.triu_indices(n, k=1)
    merges = _scipy_linkage(values[iu], method=method)
    parent = list(range(n + max(n - 1, 0)))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for step in range(n - g):
        a, b = int(merges[step, 0]), int(merges[step, 1])
        node = n + step
        parent[find(a)] = node
        parent[find(b)] = node
    roots = np.array([find(i) for i in range(n)])
    _, raw = np.unique(roots, return_inverse=True)
    labels = _renumber(raw + 1)
    objective = mean_within_cluster_distance(values, labels)
    return LinkagePartition(
        labels=labels, g=g, method=method, ids=_ids_of(d, n), objective=objective
    )


def mean_within_cluster_distance(d, labels) -> float:
    """Mean pairwise distance over all within-cluster pairs, pooled.

    Singleton clusters contribute no pairs; 0.0 when no pairs exist.
    """
    values = _as_square(d)
    labels = np.asarray(labels)
    total = 0.0
    pairs = 0
    for lab in np.unique(labels):
        idx = np.flatnonzero(labels == lab)
        if idx.shape[0] < 2:
            continue
        sub = values[np.ix_(idx, idx)]
        total += float(sub.sum()) / 2.0
        pairs += comb(idx.shape[0], 2)
    return total / pairs if pairs else 0.0


@dataclass(frozen=True)
class SizeSummary:
    """Cluster sizes keyed by label, plus the max/min imbalance ratio."""

    sizes: dict[int, int]
    imbalance: float


def cluster_size_summary(labels) -> SizeSummary:
    """Sizes per cluster and the ratio of the largest to the smallest."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("cannot summarize an empty partition")
    uniq, counts = np.unique(labels, return_counts=True)
    sizes = {int(u): int(c) for u, c in zip(uniq, counts)}
    return SizeSummary(sizes=sizes, imbalance=float(counts.max() / counts.min()))


def adjusted_rand(a, b) -> float:
    """Chance-corrected agreement between two partitions of the same items.

    1.0 for identical partitions (including the degenerate cases where the
    correction denominator vanishes), around 0 for independent ones.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("partitions must be equal-length 1-d label vectors")
    n = a.shape[0]
    if n < 2:
        raise ValueError("agreement needs at least 2 observations")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    sum_cells = sum(comb(int(v), 2) for v in table.reshape(-1))
    sum_rows = sum(comb(int(v), 2) for v in table.sum(axis=1))
    sum_cols = sum(comb(int(v), 2) for v in table.sum(axis=0))
    pairs = comb(n, 2)
    expected = sum_rows * sum_cols / pairs if pairs else 0.0
    maximum = (sum_rows + sum_cols) / 2.0
    if maximum == expected:
        return 1.0
    return float((sum_cells - expected) / (maximum - expected))
