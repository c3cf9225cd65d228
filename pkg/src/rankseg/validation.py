"""Partition quality scores and a planar map of the distance structure.

Average silhouette width and the Pearson correlation between distances and
cluster separation judge a partition without reference labels; classical
metric scaling projects the distance matrix to coordinates for plotting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distance import DistanceMatrix


def _as_square(d) -> np.ndarray:
    values = d.values if isinstance(d, DistanceMatrix) else np.asarray(d)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError("expected a square distance matrix")
    return values.astype(np.float64)


def silhouette_values(d, labels) -> np.ndarray:
    """Per-observation silhouette widths.

    Singletons get 0 by convention; so does any observation whose within and
    between means are both 0.
    """
    values = _as_square(d)
    labels = np.asarray(labels)
    n = values.shape[0]
    if n < 3:
        raise ValueError("silhouettes need at least 3 observations")
    if labels.shape != (n,):
        raise ValueError("labels must align with the distance matrix")
    uniq = np.unique(labels)
    if uniq.shape[0] < 2:
        raise ValueError("silhouettes need at least two clusters")
    sizes = {int(u): int((labels == u).sum()) for u in uniq}
    sums = np.stack([values[:, labels == u].sum(axis=1) for u in uniq], axis=1)
    out = np.zeros(n)
    for i in range(n):
        own = labels[i]
        if sizes[int(own)] == 1:
            continue
        a = sums[i, uniq == own][0] / (sizes[int(own)] - 1)
        b = min(
            sums[i, k] / sizes[int(u)] for k, u in enumerate(uniq) if u != own
        )
        m = max(a, b)
        out[i] = (b - a) / m if m > 0 else 0.0
    return out


def asw(d, labels) -> float:
    """Average silhouette width of a partition."""
    return float(silhouette_values(d, labels).mean())


def pearson_gamma(d, labels) -> float:
    """Correlation between distances and the separated-pair indicator.

    The indicator is 1 for pairs in different clusters. Large positive
    values mean distances track the partition structure.
    """
    values = _as_square(d)
    labels = np.asarray(labels)
    iu = np.triu_indices(values.shape[0], k=1)
    dist = values[iu]
    apart = (labels[iu[0]] != labels[iu[1]]).astype(np.float64)
    dist = dist - dist.mean()
    apart = apart - apart.mean()
    denom = np.sqrt((dist * dist).sum() * (apart * apart).sum())
    if denom == 0:
        raise ValueError("constant distances or a trivial partition: undefined")
    return float((dist * apart).sum() / denom)


@dataclass(frozen=True)
class MdsEmbedding:
    """Principal-coordinate embedding of a distance matrix.

    ``eigenvalues`` holds the full double-centered spectrum in descending
    order; negative entries measure how far the distances are from being
    Euclidean-embeddable.
    """

    coords: np.ndarray
    eigenvalues: np.ndarray
    ids: tuple[str, ...]

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        eig = np.asarray(self.eigenvalues, dtype=np.float64)
        coords.setflags(write=False)
        eig.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "eigenvalues", eig)
        object.__setattr__(self, "ids", tuple(self.ids))

    @property
    def k(self) -> int:
        return self.coords.shape[1]

    @property
    def positive_dimensions(self) -> int:
        """Eigenvalues meaningfully above zero at machine precision."""
        return int((self.eigenvalues > _spectrum_tol(self.eigenvalues)).sum())

    @property
    def negative_share(self) -> float:
        """|negative eigenvalue mass| / total absolute mass."""
        total = float(np.abs(self.eigenvalues).sum())
        if total == 0:
            return 0.0
        return float(-self.eigenvalues[self.eigenvalues < 0].sum() / total)

    def explained(self) -> float:
        """Share of positive eigenvalue mass captured by the kept axes."""
        pos = self.eigenvalues[self.eigenvalues > _spectrum_tol(self.eigenvalues)]
        if pos.size == 0:
            return 0.0
        kept = pos[: self.k].sum()
        return float(kept / pos.sum())


def _spectrum_tol(eigval: np.ndarray) -> float:
    """Threshold separating real positive eigenvalues from rounding noise."""
    scale = float(np.abs(eigval).max()) if eigval.size else 0.0
    return eigval.shape[0] * np.finfo(np.float64).eps * scale


def classical_mds(d, k: int = 2) -> MdsEmbedding:
    """Classical (Torgerson) metric scaling to k coordinates.

    Axes beyond the available positive eigenvalues are zero. Each kept axis
    has its sign fixed so the entry of largest magnitude is positive, making
    the embedding deterministic. The reported spectrum is raw; only the
    coordinate construction applies a machine-precision cutoff.
    """
    values = _as_square(d)
    n = values.shape[0]
    if n < 3:
        raise ValueError("scaling needs at least 3 observations")
    if not 1 <= k:
        raise ValueError("k must be >= 1")
    sq = values * values
    centered = sq - sq.mean(axis=0, keepdims=True)
    centered -= centered.mean(axis=1, keepdims=True)
    b = -0.5 * centered
    b = (b + b.T) / 2.0
    eigval, eigvec = np.linalg.eigh(b)
    order = np.argsort(eigval)[::-1]
    eigval = eigval[order]
    eigvec = eigvec[:, order]

    coords = np.zeros((n, k))
    tol = _spectrum_tol(eigval)
    for axis in range(min(k, n)):
        lam = eigval[axis]
        if lam <= tol:
            break
        col = eigvec[:, axis] * np.sqrt(lam)
        pivot = int(np.argmax(np.abs(col)))
        if col[pivot] < 0:
            col = -col
        coords[:, axis] = col

    ids = d.ids if isinstance(d, DistanceMatrix) else tuple(str(i) for i in range(n))
    return MdsEmbedding(coords=coords, eigenvalues=eigval, ids=ids)
