"""Random-forest classifier with grouped permutation importance.

Trees are grown on bootstrap samples to purity with Gini splits; accuracy on
out-of-bag rows yields both the error estimate and the importance measure
(mean decrease in OOB accuracy when a variable's columns are jointly
permuted). All randomness flows from one 64-bit seed through a SplitMix64
stream, so results are reproducible bit for bit regardless of thread count.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numba import njit

from .mlr import INTERCEPT, DesignMatrix

_PHI = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_BOOT_TAG = np.uint64(0x42F0E1EBA9EA3693)
_TREE_TAG = np.uint64(0xC2B2AE3D27D4EB4F)
_PERM_TAG = np.uint64(0x165667B19E3779F9)


@njit(cache=True)
def _mix(state):
    state = state + _PHI
    z = state
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True)
def _stream(tag, base, index):
    _, z = _mix(base ^ tag ^ (np.uint64(index) * _M2))
    return z


@njit(cache=True)
def _draw_bootstraps(n, n_trees, base):
    inbag = np.zeros((n_trees, n), dtype=np.int32)
    for t in range(n_trees):
        state = _stream(_BOOT_TAG, base, t)
        for _ in range(n):
            state, z = _mix(state)
            inbag[t, np.int64(z % np.uint64(n))] += 1
    return inbag


@njit(cache=True)
def _grow_forest(X, y, n_classes, inbag, mtry, min_node, base):
    n_trees = inbag.shape[0]
    n, m = X.shape
    max_nodes = 2 * n + 1
    feat = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    thr = np.zeros((n_trees, max_nodes), dtype=np.float64)
    left = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    right = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    pred = np.zeros((n_trees, max_nodes), dtype=np.int32)
    node_counts = np.zeros(n_trees, dtype=np.int32)

    samples = np.empty(n, dtype=np.int64)
    buf = np.empty(n, dtype=np.int64)
    vals = np.empty(n, dtype=np.float64)
    stack_node = np.empty(max_nodes, dtype=np.int32)
    stack_lo = np.empty(max_nodes, dtype=np.int32)
    stack_hi = np.empty(max_nodes, dtype=np.int32)
    counts = np.empty(n_classes, dtype=np.int64)
    counts_left = np.empty(n_classes, dtype=np.int64)
    perm = np.empty(m, dtype=np.int64)

    for t in range(n_trees):
        state = _stream(_TREE_TAG, base, t)
        pos = 0
        for r in range(n):
            for _ in range(inbag[t, r]):
                samples[pos] = r
                pos += 1
        n_nodes = 1
        stack_node[0] = 0
        stack_lo[0] = 0
        stack_hi[0] = pos
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack_node[sp]
            lo = stack_lo[sp]
            hi = stack_hi[sp]
            size = hi - lo
            for c in range(n_classes):
                counts[c] = 0
            for i in range(lo, hi):
                counts[y[samples[i]]] += 1
            best_c = 0
            for c in range(1, n_classes):
                if counts[c] > counts[best_c]:
                    best_c = c
            pred[t, node] = best_c
            if counts[best_c] == size or size < 2 * min_node or size < 2:
                continue

            for j in range(m):
                perm[j] = j
            for j in range(m - 1, 0, -1):
                state, z = _mix(state)
                k = np.int64(z % np.uint64(j + 1))
                tmp = perm[j]
                perm[j] = perm[k]
                perm[k] = tmp

            best_proxy = -1.0
            best_col = -1
            best_thr = 0.0
            found = False
            for jj in range(m):
                if jj >= mtry and found:
                    break
                col = perm[jj]
                for i in range(size):
                    vals[i] = X[samples[lo + i], col]
                order = np.argsort(vals[:size])
                for c in range(n_classes):
                    counts_left[c] = 0
                nleft = 0
                for i in range(size - 1):
                    counts_left[y[samples[lo + order[i]]]] += 1
                    nleft += 1
                    v = vals[order[i]]
                    v2 = vals[order[i + 1]]
                    if v2 > v:
                        pl = 0.0
                        pr = 0.0
                        for c in range(n_classes):
                            cl = counts_left[c]
                            cr = counts[c] - cl
                            pl += cl * cl
                            pr += cr * cr
                        proxy = pl / nleft + pr / (size - nleft)
                        if not found or proxy > best_proxy:
                            cut = 0.5 * (v + v2)
                            if cut >= v2:
                                cut = v  # midpoint rounded up; keep children nonempty
                            found = True
                            best_proxy = proxy
                            best_col = col
                            best_thr = cut

            if not found:
                continue

            for i in range(size):
                buf[i] = samples[lo + i]
            w = lo
            for i in range(size):
                if X[buf[i], best_col] <= best_thr:
                    samples[w] = buf[i]
                    w += 1
            mid = w
            for i in range(size):
                if X[buf[i], best_col] > best_thr:
                    samples[w] = buf[i]
                    w += 1

            feat[t, node] = best_col
            thr[t, node] = best_thr
            left[t, node] = n_nodes
            right[t, node] = n_nodes + 1
            stack_node[sp] = n_nodes + 1
            stack_lo[sp] = mid
            stack_hi[sp] = hi
            stack_node[sp + 1] = n_nodes
            stack_lo[sp + 1] = lo
            stack_hi[sp + 1] = mid
            sp += 2
            n_nodes += 2
        node_counts[t] = n_nodes
    return feat, thr, left, right, pred, node_counts


@njit(cache=True)
def _tree_predict_rows(X, rows, feat_t, thr_t, left_t, right_t, pred_t, out):
    for ii in range(rows.shape[0]):
        node = 0
        while feat_t[node] >= 0:
            if X[rows[ii], feat_t[node]] <= thr_t[node]:
                node = left_t[node]
            else:
                node = right_t[node]
        out[ii] = pred_t[node]


@njit(cache=True)
def _oob_votes(X, feat, thr, left, right, pred, inbag, n_classes):
    n_trees = inbag.shape[0]
    n = X.shape[0]
    votes = np.zeros((n, n_classes), dtype=np.int64)
    rows = np.empty(n, dtype=np.int64)
    out = np.empty(n, dtype=np.int32)
    for t in range(n_trees):
        k = 0
        for r in range(n):
            if inbag[t, r] == 0:
                rows[k] = r
                k += 1
        _tree_predict_rows(X, rows[:k], feat[t], thr[t], left[t], right[t], pred[t], out)
        for ii in range(k):
            votes[rows[ii], out[ii]] += 1
    return votes


@njit(cache=True)
def _forest_votes(X, feat, thr, left, right, pred, n_classes):
    n_trees = feat.shape[0]
    n = X.shape[0]
    votes = np.zeros((n, n_classes), dtype=np.int64)
    rows = np.arange(n)
    out = np.empty(n, dtype=np.int32)
    for t in range(n_trees):
        _tree_predict_rows(X, rows, feat[t], thr[t], left[t], right[t], pred[t], out)
        for i in range(n):
            votes[i, out[i]] += 1
    return votes


@njit(cache=True)
def _grouped_importance(
    X, y, feat, thr, left, right, pred, inbag, group_cols, group_offsets, base
):
    n_trees = inbag.shape[0]
    n = X.shape[0]
    n_groups = group_offsets.shape[0] - 1
    imp = np.zeros((n_trees, n_groups))
    valid = np.zeros(n_trees, dtype=np.int8)
    Xw = X.copy()
    rows = np.empty(n, dtype=np.int64)
    out = np.empty(n, dtype=np.int32)
    shuffle = np.empty(n, dtype=np.int64)
    saved = np.empty(n, dtype=np.float64)
    for t in range(n_trees):
        k = 0
        for r in range(n):
            if inbag[t, r] == 0:
                rows[k] = r
                k += 1
        if k == 0:
            continue
        valid[t] = 1
        _tree_predict_rows(Xw, rows[:k], feat[t], thr[t], left[t], right[t], pred[t], out)
        correct = 0
        for ii in range(k):
            if out[ii] == y[rows[ii]]:
                correct += 1
        acc_before = correct / k
        for v in range(n_groups):
            state = _stream(_PERM_TAG, base, t * n_groups + v)
            for i in range(k):
                shuffle[i] = i
            for i in range(k - 1, 0, -1):
                state, z = _mix(state)
                j = np.int64(z % np.uint64(i + 1))
                tmp = shuffle[i]
                shuffle[i] = shuffle[j]
                shuffle[j] = tmp
            for ci in range(group_offsets[v], group_offsets[v + 1]):
                col = group_cols[ci]
                for i in range(k):
                    saved[i] = Xw[rows[i], col]
                for i in range(k):
                    Xw[rows[i], col] = saved[shuffle[i]]
            _tree_predict_rows(
                Xw, rows[:k], feat[t], thr[t], left[t], right[t], pred[t], out
            )
            correct = 0
            for ii in range(k):
                if out[ii] == y[rows[ii]]:
                    correct += 1
            imp[t, v] = acc_before - correct / k
            for ci in range(group_offsets[v], group_offsets[v + 1]):
                col = group_cols[ci]
                for i in range(k):
                    saved[shuffle[i]] = Xw[rows[i], col]
                for i in range(k):
                    Xw[rows[i], col] = saved[i]
    return imp, valid


@dataclass(frozen=True)
class ForestParams:
    """Forest hyperparameters; defaults grow 500 fully developed trees."""

    n_trees: int = 500
    mtry: int | None = None
    min_node_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")
        if self.min_node_size < 1:
            raise ValueError("min_node_size must be >= 1")


@dataclass(frozen=True)
class ForestModel:
    """A fitted forest plus the training data needed for OOB statistics."""

    params: ForestParams
    classes: tuple
    column_names: tuple[str, ...]
    groups: Mapping[str, tuple[int, ...]]
    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    oob_votes: np.ndarray = field(repr=False)
    salt: int = 0
    _trees: tuple = field(repr=False, default=())
    _inbag: np.ndarray | None = field(repr=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "groups", {k: tuple(v) for k, v in dict(self.groups).items()})

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def mtry(self) -> int:
        if self.params.mtry is not None:
            return self.params.mtry
        return max(1, int(math.isqrt(self.X.shape[1])))

    def predict(self, X) -> np.ndarray:
        """Majority-vote labels; ties go to the lowest class."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        feat, thr, left, right, pred = self._trees
        votes = _forest_votes(X, feat, thr, left, right, pred, len(self.classes))
        idx = np.argmax(votes, axis=1)
        return np.asarray(self.classes)[idx]


def _base_state(seed: int, salt: int) -> np.uint64:
    mask = 0xFFFFFFFFFFFFFFFF
    return np.uint64((int(seed) & mask) ^ ((int(salt) * 0x9E3779B97F4A7C15) & mask))


def fit_forest(
    X,
    y=None,
    params: ForestParams = ForestParams(),
    column_names: Sequence[str] | None = None,
    groups: Mapping[str, Sequence[int]] | None = None,
) -> ForestModel:
    """Grow a forest on a numeric predictor matrix.

    ``X`` may be a :class:`DesignMatrix` (its intercept column is skipped and
    its variable groups reused), or a raw matrix whose categorical predictors
    are already indicator columns; pass ``groups`` mapping variable names to
    their column indices so importance permutes a variable's indicators
    jointly.

    Bootstrap draws are re-salted in the rare event that some observation is
    never out of bag, so every row always has an OOB vote.
    """
    if isinstance(X, DesignMatrix):
        design = X
        keep = [i for i, name in enumerate(design.column_names) if name != INTERCEPT]
        remap = {old: new for new, old in enumerate(keep)}
        X = design.X[:, keep]
        y = design.y
        column_names = tuple(design.column_names[i] for i in keep)
        groups = {
            name: tuple(remap[c] for c in cols if c in remap)
            for name, cols in design.groups.items()
        }
    if y is None:
        raise ValueError("y is required when X is a raw matrix")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, m) with y a matching label vector")
    if X.shape[0] < 2:
        raise ValueError("need at least two observations")
    classes, y_idx = np.unique(y, return_inverse=True)
    if classes.shape[0] < 2:
        warnings.warn(
            "response has a single class; the forest is a constant classifier",
            stacklevel=2,
        )
    y_idx = np.ascontiguousarray(y_idx, dtype=np.int32)
    n, m = X.shape
    names = (
        tuple(column_names)
        if column_names is not None
        else tuple(f"x{i}" for i in range(m))
    )
    if len(names) != m:
        raise ValueError("column_names must match the number of columns")
    if groups is None:
        groups = {name: (i,) for i, name in enumerate(names)}
    for gname, cols in groups.items():
        for c in cols:
            if not 0 <= c < m:
                raise ValueError(f"group {gname!r}: column index {c} out of range")

    mtry = params.mtry if params.mtry is not None else max(1, int(math.isqrt(m)))
    mtry = min(mtry, m)

    # Prefer a seeding where every row is out of bag at least once; when that
    # is unreachable (very small forests) keep the best-covered attempt and
    # let oob_error exclude the rest.
    best = None
    for salt in range(65):
        base = _base_state(params.seed, salt)
        inbag = _draw_bootstraps(n, params.n_trees, base)
        covered = int((inbag == 0).any(axis=0).sum())
        if best is None or covered > best[0]:
            best = (covered, salt, base, inbag)
        if covered == n:
            break
    _, salt, base, inbag = best

    feat, thr, left, right, pred, _ = _grow_forest(
        X, y_idx, len(classes), inbag, mtry, params.min_node_size, base
    )
    votes = _oob_votes(X, feat, thr, left, right, pred, inbag, len(classes))
    return ForestModel(
        params=params,
        classes=tuple(classes.tolist()),
        column_names=names,
        groups=groups,
        X=X,
        y=y,
        oob_votes=votes,
        salt=salt,
        _trees=(feat, thr, left, right, pred),
        _inbag=inbag,
    )


def oob_error(model: ForestModel) -> float:
    """Fraction of rows misclassified by the vote of their OOB trees.

    Rows that were in-bag for every tree carry no OOB vote; they are
    excluded from the error with a warning stating how many were dropped.
    """
    covered = model.oob_votes.sum(axis=1) > 0
    if not covered.any():
        raise ValueError("no observation has an out-of-bag vote")
    if not covered.all():
        dropped = int((~covered).sum())
        warnings.warn(
            f"{dropped} of {model.n} observations were never out of bag; "
            "they are excluded from the OOB error",
            stacklevel=2,
        )
    idx = np.argmax(model.oob_votes[covered], axis=1)  # first maximum: lowest class wins ties
    predicted = np.asarray(model.classes)[idx]
    return float(np.mean(predicted != model.y[covered]))


def baseline_error(labels) -> float:
    """Error of always predicting the most common label."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("empty label vector")
    _, counts = np.unique(labels, return_counts=True)
    return float(1.0 - counts.max() / labels.size)


@dataclass(frozen=True)
class ImportanceReport:
    """Mean decrease in OOB accuracy per variable, over all trees."""

    names: tuple[str, ...]
    importances: np.ndarray
    n_trees: int

    def __post_init__(self):
        imp = np.asarray(self.importances, dtype=np.float64)
        imp.setflags(write=False)
        object.__setattr__(self, "importances", imp)
        object.__setattr__(self, "names", tuple(self.names))

    def ranking(self) -> tuple[str, ...]:
        """Variable names from most to least important; ties keep input order."""
        order = np.argsort(-self.importances, kind="stable")
        return tuple(self.names[i] for i in order)

    def to_json(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "importances": {
                name: float(v) for name, v in zip(self.names, self.importances)
            },
            "ranking": list(self.ranking()),
        }


def permutation_importance(model: ForestModel) -> ImportanceReport:
    """Importance by jointly permuting each variable's columns on OOB rows.

    For every tree, OOB accuracy is measured before and after permuting the
    variable's column block (one shared row shuffle per variable per tree);
    the report averages the drop over trees.
    """
    names = tuple(model.groups)
    cols_flat: list[int] = []
    offsets = [0]
    for name in names:
        cols_flat.extend(model.groups[name])
        offsets.append(len(cols_flat))
    feat, thr, left, right, pred = model._trees
    classes = np.asarray(model.classes)
    y_idx = np.ascontiguousarray(np.searchsorted(classes, model.y), dtype=np.int32)
    base = _base_state(model.params.seed, model.salt)
    imp, valid = _grouped_importance(
        model.X,
        y_idx,
        feat,
        thr,
        left,
        right,
        pred,
        model._inbag,
        np.asarray(cols_flat, dtype=np.int64),
        np.asarray(offsets, dtype=np.int64),
        base,
    )
    mask = valid.astype(bool)
    if not mask.any():
        raise RuntimeError("no tree had out-of-bag rows")
    means = imp[mask].mean(axis=0)
    return ImportanceReport(names=names, importances=means, n_trees=int(mask.sum()))
