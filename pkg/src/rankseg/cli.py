"""Command line interface.

Subcommands mirror the pipeline stages so they compose through files:
``ingest`` cleans a survey, ``distances`` writes the matrix, ``cluster``
writes labels, ``validate``/``mds``/``explain-mlr``/``explain-rf`` consume
them, ``pipeline`` runs everything, and ``synth`` draws test data.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .cluster import cluster_size_summary, solution_path
from .data import (
    SchemaError,
    SurveyFormatError,
    SurveySchema,
    load_survey,
    validate_dataset,
    write_survey,
)
from .distance import DEFAULT_SCORES, DistanceMatrix, ScoreFunction, distance_matrix
from .mlr import DesignRankError, FitNotConvergedError
from .pipeline import (
    PipelineConfig,
    _write_csv,
    explain_with_forest,
    explain_with_mlr,
    read_labels,
    run_pipeline,
    write_labels,
)
from .synth import GeneratorConfig, generate, generate_nested
from .validation import asw, classical_mds, pearson_gamma


def _parse_scores(text: str) -> ScoreFunction:
    try:
        return ScoreFunction(tuple(float(s) if "." in s else int(s) for s in text.split(",")))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _parse_categories(text: str):
    """'combined' means all categories; otherwise a comma-separated subset."""
    if text == "combined":
        return None
    parts = tuple(p.strip() for p in text.split(",") if p.strip())
    if not parts:
        raise argparse.ArgumentTypeError("expected category names or 'combined'")
    return parts


def _dump(payload: dict, path: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dump_csv(header, rows, path: str | None) -> None:
    if path:
        _write_csv(Path(path), header, rows)
    else:
        from .pipeline import _fmt

        sys.stdout.write(",".join(header) + "\n")
        for row in rows:
            sys.stdout.write(",".join(_fmt(v) for v in row) + "\n")


def _load_inputs(args):
    schema = SurveySchema.from_json(args.schema)
    dataset, issues = load_survey(args.data, schema, args.delimiter)
    return dataset, issues


def _add_data_args(p):
    p.add_argument("--data", required=True, help="survey table (delimited)")
    p.add_argument("--schema", required=True, help="schema JSON")
    p.add_argument("--delimiter", default=",")


def _cmd_ingest(args) -> int:
    dataset, issues = _load_inputs(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_survey(dataset, out / "clean.csv", args.delimiter)
    _write_csv(
        out / "issues.csv",
        ["line", "id", "message"],
        [(i.line, i.respondent_id, i.message) for i in issues],
    )
    summary = validate_dataset(dataset).to_json()
    summary["n_rejected"] = len(issues)
    _dump(summary, str(out / "summary.json"))
    print(f"kept {dataset.n} records, rejected {len(issues)}; outputs in {out}")
    return 0


def _cmd_distances(args) -> int:
    dataset, _ = _load_inputs(args)
    dmat = distance_matrix(dataset, args.scores, categories=args.categories)
    dmat.save(args.out)
    print(f"wrote {dmat.n}x{dmat.n} distance matrix to {args.out}")
    return 0


def _cmd_cluster(args) -> int:
    dmat = DistanceMatrix.load(args.distances)
    g_min = args.g if args.g is not None else args.g_min
    g_max = args.g if args.g is not None else args.g_max
    solutions = solution_path(
        dmat, g_min, g_max, restarts=args.restarts, seed=args.seed
    )
    g_values = sorted(solutions)
    _write_csv(
        Path(args.out),
        ["id"] + [f"g{g}" for g in g_values],
        (
            [dmat.ids[i]] + [int(solutions[g].labels[i]) for g in g_values]
            for i in range(dmat.n)
        ),
    )
    summary = {}
    for g, sol in solutions.items():
        sizes = cluster_size_summary(sol.labels)
        summary[str(g)] = {
            "objective": sol.objective,
            "medoid_ids": list(sol.medoid_ids()),
            "sizes": {str(k): v for k, v in sizes.sizes.items()},
            "imbalance": sizes.imbalance,
            "swap_iterations": sol.swap_iterations,
        }
    _dump(summary, args.summary)
    return 0


def _cmd_validate(args) -> int:
    dmat = DistanceMatrix.load(args.distances)
    labels = read_labels(args.labels, dmat.ids, g=args.g)
    payload: dict = {"asw": asw(dmat, labels)}
    try:
        payload["pearson_gamma"] = pearson_gamma(dmat, labels)
    except ValueError as exc:
        payload["pearson_gamma"] = None
        payload["pearson_gamma_note"] = str(exc)
    if args.format == "csv":
        _dump_csv(
            ["asw", "pearson_gamma"],
            [[payload["asw"], payload["pearson_gamma"]]],
            args.out,
        )
    else:
        _dump(payload, args.out)
    return 0


def _cmd_mds(args) -> int:
    dmat = DistanceMatrix.load(args.distances)
    emb = classical_mds(dmat, k=args.k)
    _write_csv(
        Path(args.out),
        ["id"] + [f"coord{i + 1}" for i in range(args.k)],
        ([emb.ids[i]] + emb.coords[i].tolist() for i in range(len(emb.ids))),
    )
    print(
        f"wrote {args.k}-d coordinates to {args.out} "
        f"(positive dimensions: {emb.positive_dimensions}, "
        f"negative share: {emb.negative_share:.4f})"
    )
    return 0


def _cmd_explain_mlr(args) -> int:
    dataset, _ = _load_inputs(args)
    labels = read_labels(args.labels, dataset.ids, g=args.g)
    result = explain_with_mlr(dataset, labels)
    if args.format == "csv":
        rows = []
        for key, t in result["tests"].items():
            log10_p = math.log10(t["p_value"]) if t["p_value"] > 0 else None
            rows.append([key, t["statistic"], t["df"], t["p_value"], log10_p])
        _dump_csv(["test", "statistic", "df", "p_value", "log10_p"], rows, args.out)
    else:
        _dump(result, args.out)
    return 0


def _cmd_explain_rf(args) -> int:
    dataset, _ = _load_inputs(args)
    labels = read_labels(args.labels, dataset.ids, g=args.g)
    result = explain_with_forest(dataset, labels, args.trees, args.seed)
    if args.format == "csv":
        rows = [["(oob_error)", result["oob_error"]], ["(baseline_error)", result["baseline_error"]]]
        rows += [[name, result["importances"][name]] for name in result["ranking"]]
        _dump_csv(["variable", "importance"], rows, args.out)
    else:
        _dump(result, args.out)
    return 0


def _cmd_synth(args) -> int:
    if args.nested:
        survey = generate_nested(n=args.n, delta=args.delta, noise=args.noise, seed=args.seed)
    else:
        survey = generate(
            GeneratorConfig(
                n=args.n,
                g=args.g,
                seed=args.seed,
                noise=args.noise,
                numeric_effect=args.numeric_effect,
                categorical_effect=args.categorical_effect,
            )
        )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_survey(survey.dataset, out / "data.csv")
    survey.dataset.schema.save(out / "schema.json")
    write_labels(out / "truth.csv", survey.dataset.ids, survey.labels)
    print(f"wrote {survey.dataset.n} respondents to {out}")
    return 0


def _cmd_pipeline(args) -> int:
    base: dict = {}
    if args.config:
        base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        unknown = set(base) - set(PipelineConfig.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")

    def pick(key, flag, default):
        if flag is not None:
            return flag
        return base.get(key, default)

    data_path = pick("data_path", args.data, None)
    schema_path = pick("schema_path", args.schema, None)
    output_dir = pick("output_dir", args.out_dir, None)
    for label, value in (
        ("--data", data_path),
        ("--schema", schema_path),
        ("--out-dir", output_dir),
    ):
        if value is None:
            raise ValueError(f"{label} is required (flag or config file)")

    raw_cats = args.categories if args.categories is not None else base.get("categories")
    if raw_cats == "combined" or raw_cats is None:
        categories = None
    elif isinstance(raw_cats, str):
        categories = _parse_categories(raw_cats)
    else:
        categories = tuple(raw_cats)

    scores = args.scores if args.scores is not None else base.get("scores", DEFAULT_SCORES)
    config = PipelineConfig(
        data_path=data_path,
        schema_path=schema_path,
        output_dir=output_dir,
        scores=tuple(scores),
        categories=categories,
        g_min=pick("g_min", args.g_min, 2),
        g_max=pick("g_max", args.g_max, 10),
        seed=pick("seed", args.seed, 0),
        n_trees=pick("n_trees", args.trees, 500),
        restarts=pick("restarts", args.restarts, 0),
        delimiter=pick("delimiter", args.delimiter, ","),
        make_plots=False if args.no_plots else base.get("make_plots", True),
    )
    report = run_pipeline(config)
    print(
        f"analyzed {report.n} respondents (rejected {report.n_rejected}); "
        f"best g by silhouette: {report.best_g}; outputs in {config.output_dir}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankseg",
        description="cluster consumers by brand-preference rankings and explain the segments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="clean a survey table and report issues")
    _add_data_args(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("distances", help="compute the scored footrule matrix")
    _add_data_args(p)
    p.add_argument("--scores", type=_parse_scores, default=ScoreFunction(DEFAULT_SCORES))
    p.add_argument(
        "--categories",
        type=_parse_categories,
        default=None,
        help="comma-separated category names, or 'combined' (default)",
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_distances)

    p = sub.add_parser("cluster", help="partition around medoids")
    p.add_argument("--distances", required=True)
    p.add_argument("--g", type=int, default=None, help="single cluster count")
    p.add_argument("--g-min", type=int, default=2)
    p.add_argument("--g-max", type=int, default=10)
    p.add_argument("--restarts", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="labels CSV (one column per g)")
    p.add_argument("--summary", default=None, help="summary JSON (default: stdout)")
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("validate", help="silhouette and distance correlation")
    p.add_argument("--distances", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--g", type=int, default=None, help="label column to use")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("mds", help="classical scaling coordinates")
    p.add_argument("--distances", required=True)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mds)

    p = sub.add_parser("explain-mlr", help="deviance tests of cluster membership")
    _add_data_args(p)
    p.add_argument("--labels", required=True)
    p.add_argument("--g", type=int, default=None, help="label column to use")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_explain_mlr)

    p = sub.add_parser("explain-rf", help="forest importances for cluster membership")
    _add_data_args(p)
    p.add_argument("--labels", required=True)
    p.add_argument("--g", type=int, default=None, help="label column to use")
    p.add_argument("--trees", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_explain_rf)

    p = sub.add_parser("synth", help="draw a synthetic survey")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--g", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--numeric-effect", type=float, default=0.0)
    p.add_argument("--categorical-effect", type=float, default=0.0)
    p.add_argument("--nested", action="store_true", help="coarse/fine scenario")
    p.add_argument("--delta", type=float, default=0.8, help="nested personality shift")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("pipeline", help="run the full analysis")
    p.add_argument("--config", default=None, help="config JSON; flags override it")
    p.add_argument("--data", default=None, help="survey table (delimited)")
    p.add_argument("--schema", default=None, help="schema JSON")
    p.add_argument("--delimiter", default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--scores", type=_parse_scores, default=None)
    p.add_argument(
        "--categories",
        default=None,
        help="comma-separated category names, or 'combined' (default)",
    )
    p.add_argument("--g-min", type=int, default=None)
    p.add_argument("--g-max", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trees", type=int, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (
        SchemaError,
        SurveyFormatError,
        DesignRankError,
        FitNotConvergedError,
        ValueError,
        OSError,
        KeyError,
    ) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
