"""Survey data model: typed records, ingestion, TIPI scoring, diagnostics.

A survey dataset holds one ranking profile per respondent (a permutation of
1..K brands inside each of J product categories) plus explanatory variables
split into two roles: socio-demographic and personality. Everything
downstream (distances, clustering, explanation fits) consumes the immutable
:class:`Dataset` built here.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

CATEGORICAL = "categorical"
NUMERIC = "numeric"
SOCIODEMOGRAPHIC = "sociodemographic"
PERSONALITY = "personality"

#: Big Five dimension names, in output order.
PERSONALITY_DIMENSIONS = (
    "extraversion",
    "agreeableness",
    "conscientiousness",
    "emotional_stability",
    "openness",
)

#: Ten-item keying table: (dimension, reverse-scored) per item, in item order.
#: Mirrors docs/tipi_keying.csv; pass a custom table to ``score_tipi`` to
#: override.
TIPI_KEYING = (
    ("extraversion", False),
    ("agreeableness", True),
    ("conscientiousness", False),
    ("emotional_stability", True),
    ("openness", False),
    ("extraversion", True),
    ("agreeableness", False),
    ("conscientiousness", True),
    ("emotional_stability", False),
    ("openness", True),
)


class SchemaError(ValueError):
    """Schema file or header does not describe a loadable survey."""


class SurveyFormatError(ValueError):
    """Structural problem in the survey table (not a single bad row)."""


def score_tipi(items: Sequence[float], keying=TIPI_KEYING) -> tuple[float, ...]:
    """Score a ten-item personality inventory into five dimension scores.

    Each dimension is the mean of its direct item and its reverse-keyed item
    after reversal ``r -> 8 - r``.

    Args:
        items: exactly 10 responses, each in [1, 7].
        keying: per-item (dimension, reversed) pairs; defaults to the
            standard published keying shipped in docs/tipi_keying.csv.

    Returns:
        Five scores ordered extraversion, agreeableness, conscientiousness,
        emotional stability, openness.
    """
    if len(items) != len(keying):
        raise ValueError(f"expected {len(keying)} item responses, got {len(items)}")
    sums: dict[str, float] = {dim: 0.0 for dim in PERSONALITY_DIMENSIONS}
    counts: dict[str, int] = {dim: 0 for dim in PERSONALITY_DIMENSIONS}
    for value, (dim, reverse) in zip(items, keying):
        v = float(value)
        if not 1.0 <= v <= 7.0:
            raise ValueError(f"item response {value!r} outside [1, 7]")
        sums[dim] += 8.0 - v if reverse else v
        counts[dim] += 1
    missing = [dim for dim in PERSONALITY_DIMENSIONS if counts[dim] == 0]
    if missing:
        raise ValueError(f"keying covers no items for: {', '.join(missing)}")
    return tuple(sums[dim] / counts[dim] for dim in PERSONALITY_DIMENSIONS)


@dataclass(frozen=True)
class Variable:
    """One explanatory variable: categorical (with levels) or numeric."""

    name: str
    kind: str
    role: str
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (CATEGORICAL, NUMERIC):
            raise SchemaError(f"variable {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in (SOCIODEMOGRAPHIC, PERSONALITY):
            raise SchemaError(f"variable {self.name!r}: unknown role {self.role!r}")
        if self.role == PERSONALITY and self.kind != NUMERIC:
            raise SchemaError(f"personality variable {self.name!r} must be numeric")
        if self.kind == CATEGORICAL:
            if not self.levels:
                raise SchemaError(f"categorical variable {self.name!r} has no levels")
            if len(set(self.levels)) != len(self.levels):
                raise SchemaError(f"variable {self.name!r} has duplicate levels")
        elif self.levels:
            raise SchemaError(f"numeric variable {self.name!r} must not declare levels")


@dataclass(frozen=True)
class SurveySchema:
    """Declares the survey layout: ranking categories/brands and variables.

    Serialized as a JSON sidecar next to the data file, so that loading is
    unambiguous (category and brand names may themselves contain the
    ``_`` used to join them in column names).
    """

    variables: tuple[Variable, ...]
    categories: tuple[str, ...]
    brands: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise SchemaError("variable names must be unique")
        if len(set(self.categories)) != len(self.categories):
            raise SchemaError("category names must be unique")
        if set(self.brands) != set(self.categories):
            raise SchemaError("brands must be declared for exactly the listed categories")
        sizes = {len(b) for b in self.brands.values()}
        if len(sizes) != 1:
            raise SchemaError("all categories must list the same number of brands")
        for cat, brands in self.brands.items():
            if len(set(brands)) != len(brands):
                raise SchemaError(f"category {cat!r} has duplicate brands")
        object.__setattr__(self, "brands", dict(self.brands))

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    @property
    def n_brands(self) -> int:
        return len(self.brands[self.categories[0]])

    @property
    def sociodemographic(self) -> tuple[Variable, ...]:
        return tuple(v for v in self.variables if v.role == SOCIODEMOGRAPHIC)

    @property
    def personality(self) -> tuple[Variable, ...]:
        return tuple(v for v in self.variables if v.role == PERSONALITY)

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def ranking_columns(self) -> list[str]:
        """Column names of all J*K ranking cells, category-major."""
        return [f"{cat}_{brand}" for cat in self.categories for brand in self.brands[cat]]

    @classmethod
    def from_json(cls, source) -> "SurveySchema":
        if isinstance(source, (str, Path)):
            payload = json.loads(Path(source).read_text(encoding="utf-8"))
        else:
            payload = source
        try:
            categories = tuple(c["name"] for c in payload["categories"])
            brands = {c["name"]: tuple(c["brands"]) for c in payload["categories"]}
            variables = tuple(
                Variable(
                    name=v["name"],
                    kind=v["kind"],
                    role=v["role"],
                    levels=tuple(v.get("levels", ())),
                )
                for v in payload["variables"]
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema JSON: {exc}") from exc
        return cls(variables=variables, categories=categories, brands=brands)

    def to_json(self) -> dict:
        return {
            "categories": [
                {"name": cat, "brands": list(self.brands[cat])} for cat in self.categories
            ],
            "variables": [
                {
                    "name": v.name,
                    "kind": v.kind,
                    "role": v.role,
                    **({"levels": list(v.levels)} if v.kind == CATEGORICAL else {}),
                }
                for v in self.variables
            ],
        }

    def save(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


@dataclass(frozen=True)
class RankingProfile:
    """One respondent's J x K rank matrix; each row is a permutation of 1..K."""

    ranks: np.ndarray

    def __post_init__(self):
        ranks = np.asarray(self.ranks, dtype=np.int64)
        if ranks.ndim != 2:
            raise ValueError("ranks must be a 2-d (categories x brands) matrix")
        k = ranks.shape[1]
        expected = np.arange(1, k + 1)
        for j, row in enumerate(ranks):
            if not np.array_equal(np.sort(row), expected):
                raise ValueError(f"category {j}: ranks {row.tolist()} are not a permutation of 1..{k}")
        ranks.setflags(write=False)
        object.__setattr__(self, "ranks", ranks)

    @property
    def n_categories(self) -> int:
        return self.ranks.shape[0]

    @property
    def n_brands(self) -> int:
        return self.ranks.shape[1]

    def __eq__(self, other):
        if not isinstance(other, RankingProfile):
            return NotImplemented
        return np.array_equal(self.ranks, other.ranks)

    def __hash__(self):
        return hash(self.ranks.tobytes())


@dataclass(frozen=True)
class RespondentRecord:
    """A respondent: id, ranking profile, and explanatory values.

    Missing explanatory values are stored as ``None``; such records stay in
    the dataset (they participate in clustering) but are excluded from
    explanation fits.
    """

    id: str
    profile: RankingProfile
    sociodemo: Mapping[str, object]
    personality: Mapping[str, float | None]

    def __post_init__(self):
        object.__setattr__(self, "sociodemo", dict(self.sociodemo))
        object.__setattr__(self, "personality", dict(self.personality))
        for name, value in self.personality.items():
            if value is not None and not 1.0 <= float(value) <= 7.0:
                raise ValueError(f"personality score {name}={value!r} outside [1, 7]")

    def value(self, name: str):
        if name in self.personality:
            return self.personality[name]
        return self.sociodemo.get(name)

    def missing_variables(self, schema: SurveySchema) -> tuple[str, ...]:
        return tuple(v.name for v in schema.variables if self.value(v.name) is None)


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of respondent records plus the survey schema."""

    records: tuple[RespondentRecord, ...]
    schema: SurveySchema

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        j, k = self.schema.n_categories, self.schema.n_brands
        for rec in self.records:
            if rec.profile.ranks.shape != (j, k):
                raise ValueError(
                    f"record {rec.id!r}: profile shape {rec.profile.ranks.shape} "
                    f"does not match schema ({j}, {k})"
                )
        ids = [rec.id for rec in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate respondent ids")

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def categories(self) -> tuple[str, ...]:
        return self.schema.categories

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(rec.id for rec in self.records)

    def ranks_array(self) -> np.ndarray:
        """All profiles stacked as an (n, J, K) integer array."""
        if not self.records:
            return np.empty((0, self.schema.n_categories, self.schema.n_brands), dtype=np.int64)
        return np.stack([rec.profile.ranks for rec in self.records])

    def flagged_ids(self) -> tuple[str, ...]:
        """Ids of records with at least one missing explanatory value."""
        return tuple(
            rec.id for rec in self.records if rec.missing_variables(self.schema)
        )

    def complete_indices(self) -> np.ndarray:
        """Indices of records with no missing explanatory values."""
        return np.array(
            [i for i, rec in enumerate(self.records) if not rec.missing_variables(self.schema)],
            dtype=np.int64,
        )

    def fingerprint(self) -> str:
        """Stable hash of ids, rankings and labels, for output provenance."""
        h = hashlib.sha256()
        h.update(json.dumps(self.schema.to_json(), sort_keys=True).encode())
        for rec in self.records:
            h.update(rec.id.encode())
            h.update(rec.profile.ranks.tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class RowIssue:
    """A rejected input row: where, who, and why."""

    line: int
    respondent_id: str
    message: str


def _parse_rank_cell(raw: str, column: str) -> int:
    text = raw.strip()
    if not text:
        raise ValueError(f"missing ranking cell {column!r}")
    try:
        value = int(text)
    except ValueError:
        raise ValueError(f"ranking cell {column!r} is not an integer: {text!r}") from None
    return value


def _parse_row(row: Mapping[str, str], schema: SurveySchema) -> RespondentRecord:
    j, k = schema.n_categories, schema.n_brands
    ranks = np.empty((j, k), dtype=np.int64)
    for ci, cat in enumerate(schema.categories):
        seen: dict[int, str] = {}
        for bi, brand in enumerate(schema.brands[cat]):
            column = f"{cat}_{brand}"
            value = _parse_rank_cell(row[column], column)
            if not 1 <= value <= k:
                raise ValueError(f"rank {value} out of range 1..{k} in category {cat!r}")
            if value in seen:
                raise ValueError(f"duplicate rank {value} in category {cat!r}")
            seen[value] = brand
            ranks[ci, bi] = value

    sociodemo: dict[str, object] = {}
    personality: dict[str, float | None] = {}
    for var in schema.variables:
        text = row.get(var.name, "").strip()
        if not text:
            value: object = None
        elif var.kind == CATEGORICAL:
            if text not in var.levels:
                raise ValueError(f"value {text!r} for {var.name!r} is not a declared level")
            value = text
        else:
            try:
                value = float(text)
            except ValueError:
                raise ValueError(f"value {text!r} for {var.name!r} is not numeric") from None
        if var.role == PERSONALITY:
            personality[var.name] = value  # range-checked by RespondentRecord
        else:
            sociodemo[var.name] = value

    return RespondentRecord(
        id=row["id"], profile=RankingProfile(ranks), sociodemo=sociodemo, personality=personality
    )


def load_survey(
    source, schema: SurveySchema, delimiter: str = ","
) -> tuple[Dataset, list[RowIssue]]:
    """Load a delimited survey table into a typed dataset.

    Rows whose ranking cells are missing or not a valid permutation, or whose
    explanatory values violate the schema, are rejected and reported as
    :class:`RowIssue` entries. Rows with *missing* explanatory values are
    retained (flagged for exclusion from explanation fits). Structural
    problems (bad header, duplicate ids) raise.

    Args:
        source: path or text file-like object.
        schema: the survey schema; its JSON sidecar defines columns.
        delimiter: field delimiter, comma by default.

    Returns:
        (dataset, issues): kept records and per-row rejection diagnostics.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return load_survey(fh, schema, delimiter)

    reader = csv.DictReader(source, delimiter=delimiter)
    header = reader.fieldnames
    if header is None:
        raise SurveyFormatError("empty file: no header row")
    required = ["id"] + schema.ranking_columns() + [v.name for v in schema.variables]
    missing = [c for c in required if c not in header]
    if missing:
        raise SurveyFormatError(f"header is missing required columns: {missing}")
    if len(set(header)) != len(header):
        raise SurveyFormatError("header contains duplicated column names")

    records: list[RespondentRecord] = []
    issues: list[RowIssue] = []
    seen_ids: set[str] = set()
    for line, row in enumerate(reader, start=2):
        rid = (row.get("id") or "").strip()
        if not rid:
            issues.append(RowIssue(line, "", "missing respondent id"))
            continue
        if rid in seen_ids:
            raise SurveyFormatError(f"duplicated respondent id {rid!r} at line {line}")
        seen_ids.add(rid)
        try:
            records.append(_parse_row({**row, "id": rid}, schema))
        except ValueError as exc:
            issues.append(RowIssue(line, rid, str(exc)))
    return Dataset(records=tuple(records), schema=schema), issues


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)  # shortest round-trip representation
    return str(value)


def write_survey(dataset: Dataset, target, delimiter: str = ",") -> None:
    """Write a dataset back to the delimited format read by ``load_survey``."""
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="") as fh:
            write_survey(dataset, fh, delimiter)
        return
    schema = dataset.schema
    columns = ["id"] + schema.ranking_columns() + [v.name for v in schema.variables]
    writer = csv.writer(target, delimiter=delimiter, lineterminator="\n")
    writer.writerow(columns)
    for rec in dataset.records:
        cells = [rec.id]
        cells.extend(str(r) for r in rec.profile.ranks.reshape(-1))
        cells.extend(_format_value(rec.value(v.name)) for v in schema.variables)
        writer.writerow(cells)


@dataclass(frozen=True)
class DatasetReport:
    """Pure diagnostics over a dataset; never mutates it."""

    n: int
    missing_counts: Mapping[str, int]
    level_frequencies: Mapping[str, Mapping[str, int]]
    flagged_ids: tuple[str, ...]
    rankings_complete: bool
    warnings: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "missing_counts": dict(self.missing_counts),
            "level_frequencies": {k: dict(v) for k, v in self.level_frequencies.items()},
            "flagged_ids": list(self.flagged_ids),
            "rankings_complete": self.rankings_complete,
            "warnings": list(self.warnings),
        }


def validate_dataset(dataset: Dataset) -> DatasetReport:
    """Report per-variable missingness, level frequencies and completeness."""
    schema = dataset.schema
    missing = {v.name: 0 for v in schema.variables}
    freqs: dict[str, dict[str, int]] = {
        v.name: {lvl: 0 for lvl in v.levels} for v in schema.variables if v.kind == CATEGORICAL
    }
    for rec in dataset.records:
        for var in schema.variables:
            value = rec.value(var.name)
            if value is None:
                missing[var.name] += 1
            elif var.kind == CATEGORICAL:
                freqs[var.name][value] += 1
    notes = []
    if dataset.n == 0:
        notes.append("dataset is empty")
    return DatasetReport(
        n=dataset.n,
        missing_counts=missing,
        level_frequencies=freqs,
        flagged_ids=dataset.flagged_ids(),
        rankings_complete=True,  # enforced by RankingProfile at construction
        warnings=tuple(notes),
    )
