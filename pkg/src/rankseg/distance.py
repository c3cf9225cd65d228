"""Score-weighted footrule distances between ranking profiles.

Each rank r is mapped through a score function s(r) emphasizing the top of
the ranking, and two profiles are compared by summing |s(r1) - s(r2)| over
brand cells, either over all categories or a chosen subset. With integer
scores all arithmetic stays in int64, so distances are exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, RankingProfile

#: Default rank scores s(1)..s(5): steep at the top, flat at the bottom.
DEFAULT_SCORES = (1, 5, 7, 8, 9)


@dataclass(frozen=True)
class ScoreFunction:
    """Maps ranks 1..K to numeric scores; must be nondecreasing.

    Integer-valued scores keep every distance exactly representable.
    """

    values: tuple

    def __post_init__(self):
        values = tuple(self.values)
        if len(values) < 2:
            raise ValueError("a score function needs at least two ranks")
        if any(b < a for a, b in zip(values, values[1:])):
            raise ValueError(f"scores must be nondecreasing, got {values}")
        object.__setattr__(self, "values", values)

    @property
    def n_ranks(self) -> int:
        return len(self.values)

    @property
    def is_integral(self) -> bool:
        return all(float(v).is_integer() for v in self.values)

    def as_array(self) -> np.ndarray:
        dtype = np.int64 if self.is_integral else np.float64
        return np.asarray(self.values, dtype=dtype)

    def __iter__(self):
        return iter(self.values)


def _coerce_scores(scores, k: int) -> ScoreFunction:
    fn = scores if isinstance(scores, ScoreFunction) else ScoreFunction(tuple(scores))
    if fn.n_ranks != k:
        raise ValueError(f"score function covers {fn.n_ranks} ranks but profiles have {k}")
    return fn


def score_rank(rank, scores=DEFAULT_SCORES):
    """Score of a single rank (1-based) under a score function."""
    fn = scores if isinstance(scores, ScoreFunction) else ScoreFunction(tuple(scores))
    r = int(rank)
    if not 1 <= r <= fn.n_ranks:
        raise ValueError(f"rank {rank} out of range 1..{fn.n_ranks}")
    return fn.values[r - 1]


def _as_rank_matrix(profile) -> np.ndarray:
    if isinstance(profile, RankingProfile):
        return profile.ranks
    arr = np.asarray(profile, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError("expected a (categories x brands) rank matrix")
    return arr


def _category_indices(categories, n_categories: int) -> list[int]:
    idx = sorted(int(c) for c in categories)
    if not idx:
        raise ValueError("categories subset must be nonempty")
    if idx[0] < 0 or idx[-1] >= n_categories or len(set(idx)) != len(idx):
        raise ValueError(f"invalid category subset {categories!r} for J={n_categories}")
    return idx


def footrule_distance(
    a,
    b,
    scores=DEFAULT_SCORES,
    categories: Sequence[int] | None = None,
    per_category: bool = False,
):
    """Scored footrule distance between two ranking profiles.

    Args:
        a, b: :class:`RankingProfile` or rank matrices of equal shape; a
            single ranking may be passed as a 1-d vector.
        scores: score function or sequence of K scores.
        categories: category indices (0-based) to sum over; None means all.
        per_category: when true, return the vector of per-category distances
            (over the selected categories) instead of their sum.

    Returns:
        A scalar (or per-category vector) of the same kind as the scores:
        integer when the scores are integral, float otherwise.
    """
    ra, rb = _as_rank_matrix(a), _as_rank_matrix(b)
    if ra.shape != rb.shape:
        raise ValueError(f"profile shapes differ: {ra.shape} vs {rb.shape}")
    if categories is not None:
        idx = _category_indices(categories, ra.shape[0])
        ra, rb = ra[idx], rb[idx]
    fn = _coerce_scores(scores, ra.shape[1])
    table = fn.as_array()
    diff = np.abs(table[ra - 1] - table[rb - 1]).sum(axis=1)
    if per_category:
        return diff
    return diff.sum()


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric pairwise distance matrix with ids and provenance.

    ``categories`` names the category subset the distances were computed
    over (None = all categories combined); ``dataset_hash`` ties the matrix
    back to the dataset it came from.
    """

    values: np.ndarray
    ids: tuple[str, ...]
    scores: ScoreFunction
    categories: tuple[str, ...] | None = None
    dataset_hash: str | None = None

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("distance matrix must be square")
        if values.shape[0] != len(self.ids):
            raise ValueError("ids do not match matrix size")
        if not np.array_equal(values, values.T):
            raise ValueError("distance matrix must be symmetric")
        if np.any(np.diagonal(values) != 0):
            raise ValueError("self-distances must be zero")
        if np.any(values < 0):
            raise ValueError("distances must be nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "ids", tuple(self.ids))
        if self.categories is not None:
            object.__setattr__(self, "categories", tuple(self.categories))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def condensed(self) -> np.ndarray:
        """Strict upper triangle flattened row-major (i < j)."""
        iu = np.triu_indices(self.n, k=1)
        return self.values[iu]

    def save(self, target) -> None:
        """Write as CSV with provenance comments, then an id-labeled matrix."""
        if isinstance(target, (str, Path)):
            with open(target, "w", encoding="utf-8", newline="") as fh:
                self.save(fh)
            return
        target.write(f"# scores: {','.join(str(v) for v in self.scores)}\n")
        cats = "all" if self.categories is None else ",".join(self.categories)
        target.write(f"# categories: {cats}\n")
        target.write(f"# dataset: {self.dataset_hash or ''}\n")
        writer = csv.writer(target, lineterminator="\n")
        writer.writerow(["id"] + list(self.ids))
        integral = np.issubdtype(self.values.dtype, np.integer)
        for rid, row in zip(self.ids, self.values):
            cells = [str(int(v)) if integral else repr(float(v)) for v in row]
            writer.writerow([rid] + cells)

    @classmethod
    def load(cls, source) -> "DistanceMatrix":
        """Read a matrix written by :meth:`save`, including provenance."""
        if isinstance(source, (str, Path)):
            with open(source, "r", encoding="utf-8", newline="") as fh:
                return cls.load(fh)
        scores = None
        categories: tuple[str, ...] | None = None
        dataset_hash = None
        line = source.readline()
        while line.startswith("#"):
            key, _, value = line[1:].partition(":")
            key, value = key.strip(), value.strip()
            if key == "scores":
                parts = value.split(",")
                scores = ScoreFunction(
                    tuple(float(p) if "." in p else int(p) for p in parts)
                )
            elif key == "categories":
                categories = None if value == "all" else tuple(value.split(","))
            elif key == "dataset":
                dataset_hash = value or None
            line = source.readline()
        if scores is None:
            raise ValueError("distance file lacks the scores provenance line")
        header = next(csv.reader([line]))
        if not header or header[0] != "id":
            raise ValueError("malformed distance file header")
        ids = tuple(header[1:])
        rows = [row[1:] for row in csv.reader(source)]
        flat = [cell for row in rows for cell in row]
        integral = all("." not in cell and "e" not in cell.lower() for cell in flat)
        if integral:
            values = np.asarray([[int(c) for c in row] for row in rows], dtype=np.int64)
        else:
            values = np.asarray([[float(c) for c in row] for row in rows], dtype=np.float64)
        return cls(
            values=values,
            ids=ids,
            scores=scores,
            categories=categories,
            dataset_hash=dataset_hash,
        )


def distance_matrix(data, scores=DEFAULT_SCORES, categories=None) -> DistanceMatrix:
    """All pairwise scored footrule distances for a dataset.

    Args:
        data: a :class:`Dataset`, or an (n, J, K) rank array.
        scores: score function or sequence of K scores.
        categories: restrict to a subset of categories, given as one name or
            index, or a sequence of them; None sums over all categories.

    Returns:
        A :class:`DistanceMatrix`; integer-valued when the scores are.
    """
    if isinstance(data, Dataset):
        ranks = data.ranks_array()
        ids = data.ids
        cat_names = list(data.categories)
        dataset_hash = data.fingerprint()
    else:
        ranks = np.asarray(data, dtype=np.int64)
        if ranks.ndim != 3:
            raise ValueError("expected an (n, categories, brands) rank array")
        ids = tuple(str(i) for i in range(ranks.shape[0]))
        cat_names = [str(j) for j in range(ranks.shape[1])]
        dataset_hash = None

    tag: tuple[str, ...] | None = None
    if categories is not None:
        if isinstance(categories, (str, int)):
            categories = [categories]
        idx = []
        for c in categories:
            if isinstance(c, str):
                if c not in cat_names:
                    raise KeyError(f"unknown category {c!r}")
                idx.append(cat_names.index(c))
            else:
                idx.append(int(c))
        idx = _category_indices(idx, ranks.shape[1])
        tag = tuple(cat_names[i] for i in idx)
        ranks = ranks[:, idx, :]

    fn = _coerce_scores(scores, ranks.shape[2])
    table = fn.as_array()
    scored = table[ranks - 1].reshape(ranks.shape[0], -1)
    n = scored.shape[0]
    out = np.zeros((n, n), dtype=scored.dtype)
    block = 256
    for start in range(0, n, block):
        stop = min(start + block, n)
        chunk = np.abs(scored[start:stop, None, :] - scored[None, :, :]).sum(axis=2)
        out[start:stop] = chunk
    return DistanceMatrix(
        values=out, ids=ids, scores=fn, categories=tag, dataset_hash=dataset_hash
    )


def distance_vector_correlation(a, b) -> float:
    """Pearson correlation between two distance structures' condensed vectors.

    Used to compare a per-category distance against the combined one.
    """
    va = a.condensed() if isinstance(a, DistanceMatrix) else np.asarray(a, dtype=np.float64)
    vb = b.condensed() if isinstance(b, DistanceMatrix) else np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise ValueError("distance vectors differ in length")
    if va.shape[0] < 3:
        raise ValueError("need at least 3 pairs to correlate")
    va = va.astype(np.float64)
    vb = vb.astype(np.float64)
    va -= va.mean()
    vb -= vb.mean()
    denom = np.sqrt((va * va).sum() * (vb * vb).sum())
    if denom == 0:
        raise ValueError("a constant distance vector has no correlation")
    return float((va * vb).sum() / denom)
