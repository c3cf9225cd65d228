"""Scored footrule distance: hand values, axioms, serialization."""

import io
from itertools import permutations

import numpy as np
import pytest

from rankseg.distance import (
    DEFAULT_SCORES,
    DistanceMatrix,
    ScoreFunction,
    distance_matrix,
    distance_vector_correlation,
    footrule_distance,
    score_rank,
)
from rankseg.synth import GeneratorConfig, generate


def test_default_scores_and_lookup():
    assert DEFAULT_SCORES == (1, 5, 7, 8, 9)
    assert score_rank(1) == 1
    assert score_rank(5) == 9
    with pytest.raises(ValueError):
        score_rank(0)
    with pytest.raises(ValueError):
        score_rank(6)


def test_score_function_must_be_nondecreasing():
    ScoreFunction((1, 1, 2))
    with pytest.raises(ValueError):
        ScoreFunction((2, 1, 3))
    with pytest.raises(ValueError):
        ScoreFunction((1,))


def test_adjacent_top_swap_costs_eight():
    a = np.array([1, 2, 3, 4, 5])
    b = np.array([2, 1, 3, 4, 5])
    assert footrule_distance(a, b) == 8  # |1-5| + |5-1|


def test_single_category_maximum_is_22():
    a = np.array([1, 2, 3, 4, 5])
    b = np.array([5, 4, 3, 2, 1])
    assert footrule_distance(a, b) == 22


def test_distance_is_exact_int64():
    rng = np.random.default_rng(4)
    a = np.stack([rng.permutation(5) + 1 for _ in range(5)])
    b = np.stack([rng.permutation(5) + 1 for _ in range(5)])
    d = footrule_distance(a, b)
    assert isinstance(d, np.int64) or np.issubdtype(type(d), np.integer)


def test_per_category_additivity_and_subsets():
    rng = np.random.default_rng(9)
    a = np.stack([rng.permutation(5) + 1 for _ in range(4)])
    b = np.stack([rng.permutation(5) + 1 for _ in range(4)])
    parts = footrule_distance(a, b, per_category=True)
    assert parts.shape == (4,)
    assert footrule_distance(a, b) == parts.sum()
    assert footrule_distance(a, b, categories=[1, 3]) == parts[1] + parts[3]
    with pytest.raises(ValueError):
        footrule_distance(a, b, categories=[4])
    with pytest.raises(ValueError):
        footrule_distance(a, b, categories=[])


def test_metric_axioms_exhaustive_three_brands():
    """All axioms over the full space of 3-brand rankings."""
    scores = ScoreFunction((1, 5, 7))
    perms = [np.array(p) for p in permutations((1, 2, 3))]
    for x in perms:
        assert footrule_distance(x, x, scores) == 0
        for y in perms:
            dxy = footrule_distance(x, y, scores)
            assert dxy == footrule_distance(y, x, scores)
            if not np.array_equal(x, y):
                assert dxy > 0
            for z in perms:
                assert dxy <= footrule_distance(x, z, scores) + footrule_distance(
                    z, y, scores
                )


def test_brand_relabeling_leaves_distance_unchanged():
    rng = np.random.default_rng(17)
    a = np.stack([rng.permutation(5) + 1 for _ in range(3)])
    b = np.stack([rng.permutation(5) + 1 for _ in range(3)])
    base = footrule_distance(a, b)
    for _ in range(50):
        sigma = rng.permutation(5)
        assert footrule_distance(a[:, sigma], b[:, sigma]) == base


def test_rank_reversal_changes_distance():
    """The distance weights the top of the ranking, so reversing ranks
    (not brands) gives a genuinely different value."""
    a = np.array([1, 2, 3, 4, 5])
    b = np.array([2, 1, 3, 4, 5])
    assert footrule_distance(a, b) == 8
    rev_a = 6 - a
    rev_b = 6 - b
    assert footrule_distance(rev_a, rev_b) == 2  # |9-8| + |8-9|


def test_distance_matrix_from_dataset_has_provenance():
    survey = generate(GeneratorConfig(n=12, g=2, seed=3))
    dm = distance_matrix(survey.dataset)
    assert dm.n == 12
    assert dm.ids == survey.dataset.ids
    assert dm.dataset_hash == survey.dataset.fingerprint()
    assert dm.categories is None
    assert np.issubdtype(dm.values.dtype, np.integer)
    sub = distance_matrix(survey.dataset, categories=("cat2", "cat4"))
    assert sub.categories == ("cat2", "cat4")
    assert np.all(sub.values <= dm.values)


def test_distance_matrix_matches_pairwise_calls():
    survey = generate(GeneratorConfig(n=10, g=2, seed=5))
    ranks = survey.dataset.ranks_array()
    dm = distance_matrix(survey.dataset)
    for i in range(10):
        for j in range(10):
            assert dm.values[i, j] == footrule_distance(ranks[i], ranks[j])


def test_unknown_category_rejected():
    survey = generate(GeneratorConfig(n=6, g=2, seed=1))
    with pytest.raises(KeyError):
        distance_matrix(survey.dataset, categories="nope")


def test_matrix_validation():
    good = np.array([[0, 1], [1, 0]])
    DistanceMatrix(good, ids=("a", "b"), scores=ScoreFunction((1, 2)))
    with pytest.raises(ValueError):
        DistanceMatrix(np.array([[0, 1], [2, 0]]), ("a", "b"), ScoreFunction((1, 2)))
    with pytest.raises(ValueError):
        DistanceMatrix(np.array([[1, 1], [1, 0]]), ("a", "b"), ScoreFunction((1, 2)))
    with pytest.raises(ValueError):
        DistanceMatrix(np.array([[0, -1], [-1, 0]]), ("a", "b"), ScoreFunction((1, 2)))


def test_save_load_round_trip_keeps_exact_values_and_provenance():
    survey = generate(GeneratorConfig(n=9, g=3, seed=8))
    dm = distance_matrix(survey.dataset, categories=["cat1", "cat5"])
    buf = io.StringIO()
    dm.save(buf)
    buf.seek(0)
    back = DistanceMatrix.load(buf)
    assert np.array_equal(back.values, dm.values)
    assert back.values.dtype == dm.values.dtype
    assert back.ids == dm.ids
    assert tuple(back.scores) == tuple(dm.scores)
    assert back.categories == ("cat1", "cat5")
    assert back.dataset_hash == dm.dataset_hash


def test_float_scores_round_trip():
    survey = generate(GeneratorConfig(n=6, g=2, seed=2))
    dm = distance_matrix(survey.dataset, scores=(0.5, 1.0, 2.5, 3.0, 4.25))
    buf = io.StringIO()
    dm.save(buf)
    buf.seek(0)
    back = DistanceMatrix.load(buf)
    assert np.allclose(back.values, dm.values)
    assert back.values.dtype == np.float64


def test_distance_vector_correlation_guards():
    survey = generate(GeneratorConfig(n=8, g=2, seed=6))
    dm = distance_matrix(survey.dataset)
    one = distance_matrix(survey.dataset, categories="cat1")
    r = distance_vector_correlation(one, dm)
    assert -1.0 <= r <= 1.0
    same = distance_vector_correlation(dm, dm)
    assert same == pytest.approx(1.0)
    flat = np.zeros_like(dm.values)
    with pytest.raises(ValueError):
        distance_vector_correlation(
            DistanceMatrix(flat, dm.ids, dm.scores), dm
        )
