"""Synthetic survey generator with planted cluster structure.

Respondents are assigned to clusters, given that cluster's prototype
rankings perturbed by adjacent-rank swaps, and covariates whose association
with the clusters is controlled by effect sizes (0 gives exact
independence, for null calibration). A separate nested scenario plants a
coarse 2-way split refined into 8 cells, with personality effects tied only
to the fine cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import (
    CATEGORICAL,
    NUMERIC,
    PERSONALITY,
    PERSONALITY_DIMENSIONS,
    SOCIODEMOGRAPHIC,
    Dataset,
    RankingProfile,
    RespondentRecord,
    SurveySchema,
    Variable,
)


def default_schema(n_categories: int = 5, n_brands: int = 5) -> SurveySchema:
    """Survey layout used by the generator: rankings, gender, age, Big Five."""
    categories = tuple(f"cat{j + 1}" for j in range(n_categories))
    brands = {cat: tuple(f"b{k + 1}" for k in range(n_brands)) for cat in categories}
    variables = (
        Variable("gender", CATEGORICAL, SOCIODEMOGRAPHIC, ("female", "male")),
        Variable("age", NUMERIC, SOCIODEMOGRAPHIC),
    ) + tuple(Variable(dim, NUMERIC, PERSONALITY) for dim in PERSONALITY_DIMENSIONS)
    return SurveySchema(variables=variables, categories=categories, brands=brands)


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for the planted-cluster generator.

    ``noise`` is the expected number of adjacent-rank swaps per category.
    ``numeric_effect`` shifts each personality mean by that amount times a
    cluster-specific sign; ``categorical_effect`` tilts the gender split per
    cluster. Both at 0 make covariates independent of the clusters.
    """

    n: int
    g: int
    seed: int
    noise: float = 0.5
    numeric_effect: float = 0.0
    categorical_effect: float = 0.0
    balanced: bool = True
    n_categories: int = 5
    n_brands: int = 5

    def __post_init__(self):
        if self.n < 1 or self.g < 1 or self.g > self.n:
            raise ValueError("need 1 <= g <= n")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.n_brands < 2 or self.n_categories < 1:
            raise ValueError("need at least 1 category and 2 brands")
        if not 0 <= self.categorical_effect < 0.5:
            raise ValueError("categorical_effect must be in [0, 0.5)")


@dataclass(frozen=True)
class SyntheticSurvey:
    """A generated dataset plus the planted truth."""

    dataset: Dataset
    labels: np.ndarray
    prototypes: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)


def _perturb(ranks: np.ndarray, n_swaps, rng: np.random.Generator) -> np.ndarray:
    """Swap the brands holding adjacent ranks; stays a permutation."""
    out = ranks.copy()
    k = out.shape[1]
    for j, swaps in enumerate(n_swaps):
        row = out[j]
        for _ in range(swaps):
            r = int(rng.integers(1, k))  # swap holders of ranks r and r + 1
            a = int(np.flatnonzero(row == r)[0])
            b = int(np.flatnonzero(row == r + 1)[0])
            row[a], row[b] = row[b], row[a]
    return out


def _draw_prototypes(rng: np.random.Generator, g: int, j: int, k: int) -> np.ndarray:
    for _ in range(1000):
        protos = np.stack(
            [np.stack([rng.permutation(k) + 1 for _ in range(j)]) for _ in range(g)]
        ).astype(np.int64)
        flat = {p.tobytes() for p in protos}
        if len(flat) == g:
            return protos
    raise RuntimeError("could not draw distinct prototypes")


def _personality_value(rng, mean: float) -> float:
    return float(np.clip(mean + rng.normal(0.0, 1.0), 1.0, 7.0))


def _records(
    schema: SurveySchema,
    ranks: np.ndarray,
    gender: list[str],
    age: np.ndarray,
    pers: np.ndarray,
) -> tuple[RespondentRecord, ...]:
    n = ranks.shape[0]
    width = len(str(n))
    records = []
    for i in range(n):
        records.append(
            RespondentRecord(
                id=f"r{i + 1:0{width}d}",
                profile=RankingProfile(ranks[i]),
                sociodemo={"gender": gender[i], "age": float(age[i])},
                personality={
                    dim: float(pers[i, d]) for d, dim in enumerate(PERSONALITY_DIMENSIONS)
                },
            )
        )
    return tuple(records)


def generate(config: GeneratorConfig) -> SyntheticSurvey:
    """Draw a survey with ``g`` planted ranking clusters.

    Cluster prototypes are independent uniform permutations per category;
    each respondent gets their cluster's prototype with Poisson(noise)
    adjacent-rank swaps per category. Labels are 1..g, interleaved when
    ``balanced`` (sizes differ by at most one).
    """
    rng = np.random.default_rng(config.seed)
    schema = default_schema(config.n_categories, config.n_brands)
    protos = _draw_prototypes(rng, config.g, config.n_categories, config.n_brands)

    if config.balanced:
        labels = np.arange(config.n) % config.g + 1
    else:
        labels = rng.integers(1, config.g + 1, size=config.n)

    n_pers = len(PERSONALITY_DIMENSIONS)
    signs = rng.choice([-1.0, 1.0], size=(config.g, n_pers))
    tilt = rng.choice([-1.0, 1.0], size=config.g)

    ranks = np.empty((config.n, config.n_categories, config.n_brands), dtype=np.int64)
    gender: list[str] = []
    age = np.empty(config.n)
    pers = np.empty((config.n, n_pers))
    for i in range(config.n):
        c = labels[i] - 1
        swaps = rng.poisson(config.noise, size=config.n_categories)
        ranks[i] = _perturb(protos[c], swaps, rng)
        p_female = 0.5 + config.categorical_effect * tilt[c]
        gender.append("female" if rng.random() < p_female else "male")
        age[i] = float(np.clip(rng.normal(40.0, 12.0), 18.0, 80.0))
        for d in range(n_pers):
            pers[i, d] = _personality_value(
                rng, 4.0 + config.numeric_effect * signs[c, d]
            )

    dataset = Dataset(records=_records(schema, ranks, gender, age, pers), schema=schema)
    return SyntheticSurvey(dataset=dataset, labels=labels, prototypes=protos)


def _reverse(perm: np.ndarray) -> np.ndarray:
    """Reverse preference order: rank r becomes k + 1 - r."""
    return perm.shape[0] + 1 - perm


def generate_nested(
    n: int = 320,
    delta: float = 0.8,
    noise: float = 0.3,
    seed: int = 0,
) -> SyntheticSurvey:
    """Survey with a coarse 2-way ranking split refined into 8 cells.

    The first three categories separate two coarse groups (one group ranks
    them exactly opposite to the other). The last two categories each carry
    one binary "fine" trait, again prototype vs reversal, giving 2 x 2 x 2
    = 8 cells. Two personality dimensions shift by +-``delta`` with the two
    fine traits; the remaining covariates are noise. Because the fine traits
    are balanced within each coarse group, covariates are exactly
    independent of the coarse split, so a 2-cluster explanation is a true
    null while fine-grained clusterings are not.

    Labels number the 8 cells 1..8. ``n`` must be a multiple of 8.
    """
    if n % 8 != 0:
        raise ValueError("n must be a multiple of 8 to balance the cells")
    rng = np.random.default_rng(seed)
    schema = default_schema(5, 5)
    k = 5

    coarse_base = np.stack([rng.permutation(k) + 1 for _ in range(3)]).astype(np.int64)
    fine_base = np.stack([rng.permutation(k) + 1 for _ in range(2)]).astype(np.int64)

    protos = np.empty((8, 5, k), dtype=np.int64)
    for cell in range(8):
        coarse, bit1, bit2 = cell >> 2, (cell >> 1) & 1, cell & 1
        for j in range(3):
            protos[cell, j] = _reverse(coarse_base[j]) if coarse else coarse_base[j]
        protos[cell, 3] = _reverse(fine_base[0]) if bit1 else fine_base[0]
        protos[cell, 4] = _reverse(fine_base[1]) if bit2 else fine_base[1]

    labels = np.arange(n) % 8 + 1
    n_pers = len(PERSONALITY_DIMENSIONS)
    ranks = np.empty((n, 5, k), dtype=np.int64)
    gender: list[str] = []
    age = np.empty(n)
    pers = np.empty((n, n_pers))
    for i in range(n):
        cell = labels[i] - 1
        bit1, bit2 = (cell >> 1) & 1, cell & 1
        swaps = rng.poisson(noise, size=5)
        ranks[i] = _perturb(protos[cell], swaps, rng)
        gender.append("female" if rng.random() < 0.5 else "male")
        age[i] = float(np.clip(rng.normal(40.0, 12.0), 18.0, 80.0))
        means = np.full(n_pers, 4.0)
        means[0] = 4.0 + (delta if bit1 else -delta)
        means[1] = 4.0 + (delta if bit2 else -delta)
        for d in range(n_pers):
            pers[i, d] = _personality_value(rng, means[d])

    dataset = Dataset(records=_records(schema, ranks, gender, age, pers), schema=schema)
    return SyntheticSurvey(dataset=dataset, labels=labels, prototypes=protos)
