"""End-to-end run: ingest, distances, clustering, validation, explanation.

Writes delimited outputs plus a JSON report into one output directory, and
optionally renders figures next to them. Reruns with the same config and
seed produce byte-identical files. A failed explanation fit for one cluster
count is recorded as a gap for that count; it never aborts the run.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version as _installed_version
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy

from .cluster import (
    ClusterSolution,
    cluster_size_summary,
    mean_within_cluster_distance,
    pam,
)
from .data import CATEGORICAL, Dataset, SurveySchema, load_survey, validate_dataset
from .distance import (
    DEFAULT_SCORES,
    DistanceMatrix,
    ScoreFunction,
    distance_matrix,
    distance_vector_correlation,
)
from .forest import (
    ForestParams,
    baseline_error,
    fit_forest,
    oob_error,
    permutation_importance,
)
from .mlr import (
    DesignMatrix,
    DesignRankError,
    FitNotConvergedError,
    lrt_block,
    lrt_per_variable,
)
from .validation import asw, classical_mds, pearson_gamma


@dataclass(frozen=True)
class PipelineConfig:
    """Inputs and knobs for one full run.

    ``categories`` restricts the distance to a category subset; None means
    the combined distance over all categories.
    """

    data_path: str
    schema_path: str
    output_dir: str
    scores: tuple = DEFAULT_SCORES
    categories: tuple[str, ...] | None = None
    g_min: int = 2
    g_max: int = 10
    seed: int = 0
    n_trees: int = 500
    mtry: int | None = None
    mlr_max_iter: int = 200
    restarts: int = 0
    delimiter: str = ","
    make_plots: bool = True

    def __post_init__(self):
        if not 2 <= self.g_min <= self.g_max:
            raise ValueError("need 2 <= g_min <= g_max")
        object.__setattr__(self, "scores", tuple(self.scores))
        if self.categories is not None:
            object.__setattr__(self, "categories", tuple(self.categories))

    def to_json(self) -> dict:
        return {
            "data_path": self.data_path,
            "schema_path": self.schema_path,
            "output_dir": self.output_dir,
            "scores": list(self.scores),
            "categories": None if self.categories is None else list(self.categories),
            "g_min": self.g_min,
            "g_max": self.g_max,
            "seed": self.seed,
            "n_trees": self.n_trees,
            "mtry": self.mtry,
            "mlr_max_iter": self.mlr_max_iter,
            "restarts": self.restarts,
            "delimiter": self.delimiter,
            "make_plots": self.make_plots,
        }

    @classmethod
    def from_json(cls, payload: Mapping) -> "PipelineConfig":
        allowed = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - allowed
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(payload)
        if "scores" in kwargs:
            kwargs["scores"] = tuple(kwargs["scores"])
        if kwargs.get("categories") is not None:
            kwargs["categories"] = tuple(kwargs["categories"])
        return cls(**kwargs)

    def fingerprint(self) -> str:
        """Hash of the canonical config serialization, for provenance."""
        canon = json.dumps(self.to_json(), sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def _package_versions() -> dict[str, str]:
    try:
        own = _installed_version("rankseg")
    except PackageNotFoundError:
        own = "unknown"
    return {"rankseg": own, "numpy": np.__version__, "scipy": scipy.__version__}


@dataclass(frozen=True)
class ExplainReport:
    """Everything a run produced, mirrored in report.json."""

    n: int
    n_rejected: int
    fingerprint: str
    per_g: Mapping[int, dict]
    best_g: int
    category_correlations: Mapping[str, float | None]
    mds_diagnostics: dict
    files: tuple[str, ...] = ()
    config: PipelineConfig | None = None
    data_summary: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        provenance = {
            "config_sha256": self.config.fingerprint() if self.config else None,
            "seed": self.config.seed if self.config else None,
            "versions": _package_versions(),
        }
        return _jsonify(
            {
                "n": self.n,
                "n_rejected": self.n_rejected,
                "fingerprint": self.fingerprint,
                "best_g": self.best_g,
                "per_g": {str(g): v for g, v in sorted(self.per_g.items())},
                "category_correlations": dict(self.category_correlations),
                "mds": self.mds_diagnostics,
                "files": list(self.files),
                "config": self.config.to_json() if self.config else None,
                "provenance": provenance,
                "data_summary": self.data_summary,
            }
        )


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    return obj


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def forest_design(dataset: Dataset, rows: Sequence[int]):
    """Indicator expansion of all explanatory variables for tree models.

    Unlike the regression design, every categorical level gets a column
    (trees have no collinearity concerns) and there is no intercept.

    Returns:
        (X, column_names, groups) for the given record rows.
    """
    columns: list[np.ndarray] = []
    names: list[str] = []
    groups: dict[str, tuple[int, ...]] = {}
    for var in dataset.schema.variables:
        values = [dataset.records[i].value(var.name) for i in rows]
        if any(v is None for v in values):
            raise ValueError(f"missing values in {var.name!r}; pass complete rows")
        start = len(names)
        if var.kind == CATEGORICAL:
            for level in var.levels:
                columns.append(np.array([1.0 if v == level else 0.0 for v in values]))
                names.append(f"{var.name}={level}")
        else:
            columns.append(np.array([float(v) for v in values]))
            names.append(var.name)
        groups[var.name] = tuple(range(start, len(names)))
    return np.column_stack(columns), tuple(names), groups


def explain_with_mlr(dataset: Dataset, labels, max_iter: int = 200) -> dict:
    """Deviance tests for one clustering: role blocks plus per-variable."""
    design = DesignMatrix.build(dataset, labels)
    out: dict = {"n_used": design.n}
    tests = []
    for role in ("personality", "sociodemographic"):
        if design.variables_with_role(role):
            tests.append(("block:" + role, lrt_block(design, role, max_iter=max_iter)))
    for test in lrt_per_variable(design, max_iter=max_iter):
        tests.append(("variable:" + test.name, test))
    out["tests"] = {
        key: {
            "statistic": t.statistic,
            "df": t.df,
            "p_value": t.p_value,
            "loglik_full": t.loglik_full,
            "loglik_reduced": t.loglik_reduced,
        }
        for key, t in tests
    }
    return out


def explain_with_forest(
    dataset: Dataset, labels, n_trees: int, seed: int, mtry: int | None = None
) -> dict:
    """Forest fit for one clustering: OOB error and variable importances."""
    labels = np.asarray(labels)
    rows = dataset.complete_indices()
    X, names, groups = forest_design(dataset, rows.tolist())
    y = labels[rows]
    model = fit_forest(
        X,
        y,
        ForestParams(n_trees=n_trees, mtry=mtry, seed=seed),
        column_names=names,
        groups=groups,
    )
    report = permutation_importance(model)
    return {
        "n_used": int(rows.shape[0]),
        "oob_error": oob_error(model),
        "baseline_error": baseline_error(y),
        "importances": {
            name: float(v) for name, v in zip(report.names, report.importances)
        },
        "ranking": list(report.ranking()),
    }


def write_labels(path, ids: Sequence[str], labels) -> None:
    """Write an (id, label) table readable by ``read_labels``."""
    _write_csv(Path(path), ["id", "label"], zip(ids, np.asarray(labels).tolist()))


def read_labels(path, ids: Sequence[str], g: int | None = None) -> np.ndarray:
    """Read a label column from an (id, labels...) table, aligned to ids.

    The file may hold one column per cluster count (named ``g2``, ``g3``,
    ...) as written by the clustering stage, or a single ``label`` column.
    ``g`` picks the column; it may be omitted when only one column exists.
    """
    mapping: dict[str, int] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        fields = list(reader.fieldnames or [])
        if "id" not in fields:
            raise ValueError("labels file needs an 'id' column")
        label_cols = [f for f in fields if f != "id"]
        if g is not None:
            column = f"g{g}"
            if column not in label_cols:
                raise ValueError(f"labels file has no column {column!r}")
        elif len(label_cols) == 1:
            column = label_cols[0]
        elif "label" in label_cols:
            column = "label"
        else:
            raise ValueError(
                f"labels file has columns {label_cols}; pass g to pick one"
            )
        for row in reader:
            mapping[row["id"]] = int(row[column])
    missing = [i for i in ids if i not in mapping]
    if missing:
        raise ValueError(f"labels file lacks ids: {missing[:5]}")
    return np.array([mapping[i] for i in ids], dtype=np.int64)


def run_pipeline(config: PipelineConfig) -> ExplainReport:
    """Execute the full analysis and write its outputs.

    Files written: issues.csv, distances.csv, clusters.csv, validation.csv,
    mds.csv, mlr_tests.csv, importance.csv, report.json, and (unless
    disabled) PNG figures.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    schema = SurveySchema.from_json(config.schema_path)
    dataset, issues = load_survey(config.data_path, schema, config.delimiter)
    if dataset.n < 3:
        raise ValueError(f"only {dataset.n} usable respondents; need at least 3")
    scores = ScoreFunction(tuple(config.scores))
    files: list[str] = []

    def emit(name: str) -> Path:
        files.append(name)
        return out_dir / name

    _write_csv(
        emit("issues.csv"),
        ["line", "id", "message"],
        [(i.line, i.respondent_id, i.message) for i in issues],
    )

    dmat = distance_matrix(dataset, scores, categories=config.categories)
    dmat.save(emit("distances.csv"))

    correlations: dict[str, float | None] = {}
    for cat in config.categories or dataset.categories:
        per_cat = distance_matrix(dataset, scores, categories=cat)
        try:
            correlations[cat] = distance_vector_correlation(per_cat, dmat)
        except ValueError:
            correlations[cat] = None

    g_max = min(config.g_max, dataset.n - 1)
    g_values = list(range(config.g_min, g_max + 1))
    solutions: dict[int, ClusterSolution] = {
        g: pam(dmat, g, restarts=config.restarts, seed=config.seed) for g in g_values
    }
    _write_csv(
        emit("clusters.csv"),
        ["id"] + [f"g{g}" for g in g_values],
        (
            [dataset.ids[i]] + [int(solutions[g].labels[i]) for g in g_values]
            for i in range(dataset.n)
        ),
    )

    per_g: dict[int, dict] = {}
    for g in g_values:
        sol = solutions[g]
        summary = cluster_size_summary(sol.labels)
        entry: dict = {
            "objective": sol.objective,
            "medoid_ids": list(sol.medoid_ids()),
            "sizes": summary.sizes,
            "imbalance": summary.imbalance,
            "mean_within_distance": mean_within_cluster_distance(dmat, sol.labels),
            "asw": asw(dmat, sol.labels),
        }
        try:
            entry["pearson_gamma"] = pearson_gamma(dmat, sol.labels)
        except ValueError as exc:
            entry["pearson_gamma"] = None
            entry["pearson_gamma_note"] = str(exc)
        per_g[g] = entry

    _write_csv(
        emit("validation.csv"),
        [
            "g",
            "objective",
            "asw",
            "pearson_gamma",
            "mean_within_distance",
            "imbalance",
            "sizes",
        ],
        (
            [
                g,
                per_g[g]["objective"],
                per_g[g]["asw"],
                per_g[g]["pearson_gamma"],
                per_g[g]["mean_within_distance"],
                per_g[g]["imbalance"],
                ";".join(f"{k}:{v}" for k, v in per_g[g]["sizes"].items()),
            ]
            for g in g_values
        ),
    )

    embedding = classical_mds(dmat, k=2)
    _write_csv(
        emit("mds.csv"),
        ["id", "x", "y"],
        (
            [dataset.ids[i], embedding.coords[i, 0], embedding.coords[i, 1]]
            for i in range(dataset.n)
        ),
    )
    mds_diag = {
        "positive_dimensions": embedding.positive_dimensions,
        "negative_share": embedding.negative_share,
        "explained": embedding.explained(),
        "top_eigenvalues": embedding.eigenvalues[:5].tolist(),
        "coordinates": embedding.coords,
    }

    for g in g_values:
        sol = solutions[g]
        try:
            per_g[g]["mlr"] = explain_with_mlr(
                dataset, sol.labels, max_iter=config.mlr_max_iter
            )
        except (FitNotConvergedError, DesignRankError, ValueError) as exc:
            per_g[g]["mlr"] = {"error": str(exc)}
        try:
            per_g[g]["forest"] = explain_with_forest(
                dataset, sol.labels, config.n_trees, config.seed + g, mtry=config.mtry
            )
        except (RuntimeError, ValueError) as exc:
            per_g[g]["forest"] = {"error": str(exc)}

    mlr_rows = []
    for g in g_values:
        block = per_g[g]["mlr"]
        if "error" in block:
            mlr_rows.append([g, "(failed)", None, None, None, None, block["error"]])
            continue
        for key, t in block["tests"].items():
            log10_p = math.log10(t["p_value"]) if t["p_value"] > 0 else None
            mlr_rows.append(
                [g, key, t["statistic"], t["df"], t["p_value"], log10_p, ""]
            )
    _write_csv(
        emit("mlr_tests.csv"),
        ["g", "test", "statistic", "df", "p_value", "log10_p", "note"],
        mlr_rows,
    )

    imp_rows = []
    for g in g_values:
        block = per_g[g]["forest"]
        if "error" in block:
            imp_rows.append([g, "(failed)", None, block["error"]])
            continue
        for name in block["ranking"]:
            imp_rows.append([g, name, block["importances"][name], ""])
    _write_csv(emit("importance.csv"), ["g", "variable", "importance", "note"], imp_rows)

    best_g = max(g_values, key=lambda g: (per_g[g]["asw"], -g))

    if config.make_plots:
        from . import plots

        labels_best = solutions[best_g].labels
        plots.plot_mds(embedding, labels_best, emit(f"mds_g{best_g}.png"))
        plots.plot_validation_path(per_g, emit("validation_path.png"))
        plots.plot_cluster_sizes(solutions[best_g], emit(f"sizes_g{best_g}.png"))
        plots.plot_distance_heatmap(dmat, labels_best, emit("distance_heatmap.png"))
        plots.plot_pvalue_path(per_g, emit("pvalue_path.png"))
        forest_block = per_g[best_g]["forest"]
        if "error" not in forest_block:
            plots.plot_importance(
                forest_block["importances"], emit(f"importance_g{best_g}.png")
            )

    report = ExplainReport(
        n=dataset.n,
        n_rejected=len(issues),
        fingerprint=dataset.fingerprint(),
        per_g=per_g,
        best_g=best_g,
        category_correlations=correlations,
        mds_diagnostics=mds_diag,
        files=tuple(files + ["report.json"]),
        config=config,
        data_summary=validate_dataset(dataset).to_json(),
    )
    (out_dir / "report.json").write_text(
        json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return report
