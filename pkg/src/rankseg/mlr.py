"""Multinomial logistic regression and likelihood-ratio deviance tests.

Cluster labels are the response; the lowest label is the reference class.
Fitting is unpenalized maximum likelihood by Newton's method with a
backtracking line search (the log-likelihood is concave, so the optimum is
global). Deviance tests compare nested fits and refuse unconverged ones.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import qr as _pivoted_qr
from scipy.special import gammaincc

from .data import CATEGORICAL, Dataset

INTERCEPT = "(intercept)"


class FitNotConvergedError(RuntimeError):
    """A likelihood fit did not reach the convergence tolerances."""


class DesignRankError(ValueError):
    """The design matrix is rank deficient; names the offending columns."""

    def __init__(self, columns: Sequence[str]):
        self.columns = tuple(columns)
        super().__init__(
            "design matrix is rank deficient; drop or merge: " + ", ".join(self.columns)
        )


def chi_square_sf(x: float, df: float) -> float:
    """Upper tail probability of the chi-square distribution."""
    if df <= 0:
        raise ValueError(f"df must be positive, got {df}")
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x}")
    if x == 0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


@dataclass(frozen=True)
class DesignMatrix:
    """Model matrix for explaining cluster labels, complete cases only.

    Categorical variables become indicator columns with the first declared
    level as reference; the intercept is the first column. ``groups`` maps
    each variable to its column indices so whole variables can be dropped
    for nested tests.
    """

    X: np.ndarray
    y: np.ndarray
    column_names: tuple[str, ...]
    groups: Mapping[str, tuple[int, ...]]
    roles: Mapping[str, str]
    row_indices: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be (n, p) and y a matching label vector")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(
            self, "groups", {k: tuple(v) for k, v in dict(self.groups).items()}
        )
        object.__setattr__(self, "roles", dict(self.roles))
        object.__setattr__(
            self, "row_indices", np.asarray(self.row_indices, dtype=np.int64)
        )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def variables(self) -> tuple[str, ...]:
        return tuple(self.groups)

    def variables_with_role(self, role: str) -> tuple[str, ...]:
        return tuple(name for name, r in self.roles.items() if r == role)

    def drop(self, names: Sequence[str]) -> "DesignMatrix":
        """New design without the named variables' columns."""
        names = [names] if isinstance(names, str) else list(names)
        for name in names:
            if name not in self.groups:
                raise KeyError(f"variable {name!r} is not in the design")
        removed = {c for name in names for c in self.groups[name]}
        keep = [i for i in range(self.p) if i not in removed]
        remap = {old: new for new, old in enumerate(keep)}
        groups = {
            name: tuple(remap[c] for c in cols)
            for name, cols in self.groups.items()
            if name not in names
        }
        roles = {name: role for name, role in self.roles.items() if name not in names}
        return DesignMatrix(
            X=self.X[:, keep],
            y=self.y,
            column_names=tuple(self.column_names[i] for i in keep),
            groups=groups,
            roles=roles,
            row_indices=self.row_indices,
        )

    @classmethod
    def build(
        cls,
        dataset: Dataset,
        labels,
        variables: Sequence[str] | None = None,
        standardize: bool = False,
    ) -> "DesignMatrix":
        """Assemble the design from a dataset and aligned cluster labels.

        Records with a missing value in any used variable are excluded, and
        a rank check (pivoted QR) rejects collinear designs by column name.
        ``standardize`` centers and scales numeric columns; deviance tests
        are invariant to it, so it is off by default.
        """
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape[0] != dataset.n:
            raise ValueError("labels must align with the dataset records")
        schema = dataset.schema
        use = (
            [schema.variable(v) for v in variables]
            if variables is not None
            else list(schema.variables)
        )

        rows = [
            i
            for i, rec in enumerate(dataset.records)
            if all(rec.value(v.name) is not None for v in use)
        ]
        if not rows:
            raise ValueError("no complete cases for the requested variables")

        columns: list[np.ndarray] = [np.ones(len(rows))]
        names: list[str] = [INTERCEPT]
        groups: dict[str, tuple[int, ...]] = {}
        roles: dict[str, str] = {}
        for var in use:
            values = [dataset.records[i].value(var.name) for i in rows]
            start = len(names)
            if var.kind == CATEGORICAL:
                for level in var.levels[1:]:
                    columns.append(
                        np.array([1.0 if v == level else 0.0 for v in values])
                    )
                    names.append(f"{var.name}={level}")
            else:
                col = np.array([float(v) for v in values])
                if standardize:
                    sd = col.std()
                    col = (col - col.mean()) / (sd if sd > 0 else 1.0)
                columns.append(col)
                names.append(var.name)
            groups[var.name] = tuple(range(start, len(names)))
            roles[var.name] = var.role

        X = np.column_stack(columns)
        _check_rank(X, names)
        return cls(
            X=X,
            y=labels[rows],
            column_names=tuple(names),
            groups=groups,
            roles=roles,
            row_indices=np.asarray(rows, dtype=np.int64),
        )


def _check_rank(X: np.ndarray, names: Sequence[str]) -> None:
    _, r, piv = _pivoted_qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diagonal(r))
    tol = max(X.shape) * np.finfo(np.float64).eps * (diag[0] if diag.size else 0.0)
    rank = int((diag > tol).sum())
    if rank < X.shape[1]:
        bad = sorted(piv[rank:].tolist())
        raise DesignRankError([names[i] for i in bad])


def _log_probabilities(X: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """Row-wise log P(class) with the reference class prepended as column 0."""
    eta = np.hstack([np.zeros((X.shape[0], 1)), X @ coef])
    m = eta.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(eta - m).sum(axis=1, keepdims=True))
    return eta - lse


def loglik_and_gradient(X, y, coef, classes=None):
    """Log-likelihood and score of the reference-class parameterization.

    ``coef`` has one column per non-reference class, ordered by ascending
    class label. Exposed separately from the fitter so the score can be
    checked against finite differences.

    Returns:
        (loglik, gradient) with the gradient shaped like ``coef``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if classes is None:
        classes = np.unique(y)
    coef = np.asarray(coef, dtype=np.float64)
    if coef.shape != (X.shape[1], len(classes) - 1):
        raise ValueError(
            f"coef must be (p, classes-1) = ({X.shape[1]}, {len(classes) - 1})"
        )
    y_idx = np.searchsorted(classes, y)
    logp = _log_probabilities(X, coef)
    ll = float(logp[np.arange(X.shape[0]), y_idx].sum())
    P = np.exp(logp)
    Y = np.zeros_like(P)
    Y[np.arange(X.shape[0]), y_idx] = 1.0
    grad = X.T @ (Y[:, 1:] - P[:, 1:])
    return ll, grad


def _hessian(X: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Negative observed information, blocked by non-reference class."""
    n, p = X.shape
    q = P.shape[1] - 1
    H = np.empty((p * q, p * q))
    for a in range(q):
        for b in range(a, q):
            w = P[:, a + 1] * ((1.0 if a == b else 0.0) - P[:, b + 1])
            block = -(X.T @ (w[:, None] * X))
            H[a * p : (a + 1) * p, b * p : (b + 1) * p] = block
            if a != b:
                H[b * p : (b + 1) * p, a * p : (a + 1) * p] = block.T
    return H


@dataclass(frozen=True)
class MlrFit:
    """A fitted multinomial logit: coefficients, fit quality, provenance.

    ``converged`` is false when iteration stopped without meeting both the
    log-likelihood and gradient tolerances; downstream tests must refuse
    such fits rather than quote their deviances.
    """

    coef: np.ndarray
    classes: tuple[int, ...]
    column_names: tuple[str, ...]
    loglik: float
    converged: bool
    iterations: int
    max_gradient: float
    n: int

    def __post_init__(self):
        coef = np.asarray(self.coef, dtype=np.float64)
        coef.setflags(write=False)
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "classes", tuple(int(c) for c in self.classes))

    @property
    def g(self) -> int:
        return len(self.classes)

    @property
    def p(self) -> int:
        return self.coef.shape[0]

    @property
    def deviance(self) -> float:
        return -2.0 * self.loglik

    def predict_proba(self, X) -> np.ndarray:
        """Class probabilities, columns ordered like ``classes``."""
        X = np.asarray(X, dtype=np.float64)
        return np.exp(_log_probabilities(X, self.coef))


def fit_mlr(
    design,
    y=None,
    max_iter: int = 200,
    tol_loglik: float = 1e-10,
    tol_gradient: float = 1e-6,
    column_names: Sequence[str] | None = None,
) -> MlrFit:
    """Fit a multinomial logit by Newton's method with backtracking.

    Args:
        design: a :class:`DesignMatrix`, or a raw model matrix (then ``y``
            must be given and the matrix must already contain any intercept).
        y: labels when ``design`` is a raw matrix.
        max_iter: Newton iteration cap; hitting it flags the fit.
        tol_loglik: relative log-likelihood change required to stop.
        tol_gradient: max absolute score entry required to stop.

    Returns:
        :class:`MlrFit`; check ``converged`` before using deviances.
    """
    if isinstance(design, DesignMatrix):
        X, y = design.X, design.y
        names = design.column_names
    else:
        if y is None:
            raise ValueError("y is required when design is a raw matrix")
        X = np.asarray(design, dtype=np.float64)
        names = (
            tuple(column_names)
            if column_names is not None
            else tuple(f"x{i}" for i in range(X.shape[1]))
        )
    y = np.asarray(y, dtype=np.int64)
    classes = np.unique(y)
    if classes.shape[0] < 2:
        raise ValueError("need at least two classes to fit")
    n, p = X.shape
    q = classes.shape[0] - 1
    if n <= p * q:
        warnings.warn(
            f"only {n} complete cases for {p * q} free parameters; "
            "estimates may be unstable",
            stacklevel=2,
        )

    coef = np.zeros((p, q))
    ll, grad = loglik_and_gradient(X, y, coef, classes)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        P = np.exp(_log_probabilities(X, coef))
        H = _hessian(X, P)
        gvec = grad.ravel(order="F")
        scale = max(np.abs(np.diagonal(H)).max(), 1.0)
        ridge = 0.0
        while True:
            try:
                step = np.linalg.solve(-(H - ridge * np.eye(p * q)), gvec)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                break
            ridge = scale * 1e-10 if ridge == 0.0 else ridge * 100.0
        direction = step.reshape((p, q), order="F")
        slope = float(gvec @ step)
        if slope <= 0:  # not an ascent direction; fall back to the score
            direction = grad
            slope = float((grad * grad).sum())

        t = 1.0
        new_ll, new_grad, new_coef = ll, grad, coef
        while t > 2.0**-40:
            cand = coef + t * direction
            cand_ll, cand_grad = loglik_and_gradient(X, y, cand, classes)
            if np.isfinite(cand_ll) and cand_ll >= ll + 1e-4 * t * slope:
                new_ll, new_grad, new_coef = cand_ll, cand_grad, cand
                break
            t /= 2.0
        if new_ll <= ll and t <= 2.0**-40:
            break  # no progress possible; convergence check decides the flag

        rel = abs(new_ll - ll) / max(1.0, abs(new_ll))
        coef, ll, grad = new_coef, new_ll, new_grad
        if rel < tol_loglik and np.abs(grad).max() < tol_gradient:
            converged = True
            break

    # Separated classes push the optimum to infinity; the gradient still
    # vanishes there, so tolerance checks alone would claim success. Treat
    # saturated log-odds as a boundary fit and flag it.
    if converged and q > 0:
        eta_max = float(np.abs(X @ coef).max())
        if eta_max > 20.0:
            converged = False
            warnings.warn(
                f"fitted log-odds reach {eta_max:.1f}: classes are (quasi-)separated "
                "and the estimates sit on the boundary",
                stacklevel=2,
            )

    return MlrFit(
        coef=coef,
        classes=tuple(int(c) for c in classes),
        column_names=names,
        loglik=ll,
        converged=converged,
        iterations=iterations,
        max_gradient=float(np.abs(grad).max()),
        n=n,
    )


@dataclass(frozen=True)
class DevianceTest:
    """Likelihood-ratio test of a reduced model nested in a full one."""

    name: str
    statistic: float
    df: int
    p_value: float
    loglik_full: float
    loglik_reduced: float
    dropped_columns: tuple[str, ...]
    n: int
    g: int

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "loglik_full": self.loglik_full,
            "loglik_reduced": self.loglik_reduced,
            "dropped_columns": list(self.dropped_columns),
            "n": self.n,
            "g": self.g,
        }


def _deviance(
    name: str, design: DesignMatrix, drop_names: Sequence[str], **fit_kwargs
) -> DevianceTest:
    full = fit_mlr(design, **fit_kwargs)
    if not full.converged:
        raise FitNotConvergedError(
            f"full model did not converge after {full.iterations} iterations "
            f"(max |score| {full.max_gradient:.3g})"
        )
    reduced_design = design.drop(drop_names)
    reduced = fit_mlr(reduced_design, **fit_kwargs)
    if not reduced.converged:
        raise FitNotConvergedError(
            f"reduced model without {list(drop_names)} did not converge"
        )
    dropped = tuple(
        design.column_names[c] for name_ in drop_names for c in design.groups[name_]
    )
    stat = 2.0 * (full.loglik - reduced.loglik)
    if stat < -1e-6:
        raise RuntimeError(
            f"reduced model beat the full one by {-stat:.3g}: nesting violated"
        )
    stat = max(stat, 0.0)
    df = (full.g - 1) * len(dropped)
    return DevianceTest(
        name=name,
        statistic=stat,
        df=df,
        p_value=chi_square_sf(stat, df),
        loglik_full=full.loglik,
        loglik_reduced=reduced.loglik,
        dropped_columns=dropped,
        n=design.n,
        g=full.g,
    )


def lrt_block(design: DesignMatrix, block, **fit_kwargs) -> DevianceTest:
    """Joint deviance test of a whole variable block.

    ``block`` is a list of variable names, or a role string
    ("personality" / "sociodemographic") to expand via the design's roles.
    """
    if isinstance(block, str):
        names = design.variables_with_role(block)
        if not names:
            raise ValueError(f"no variables with role {block!r} in the design")
        label = block
    else:
        names = tuple(block)
        label = "+".join(names)
    return _deviance(label, design, names, **fit_kwargs)


def lrt_per_variable(design: DesignMatrix, **fit_kwargs) -> list[DevianceTest]:
    """One drop-one-variable deviance test per variable in the design."""
    return [
        _deviance(name, design, [name], **fit_kwargs) for name in design.variables()
    ]
