"""Planted-cluster generator: validity, effect knobs, nested scenario."""

import numpy as np
import pytest

from rankseg.cluster import adjusted_rand, pam
from rankseg.data import PERSONALITY_DIMENSIONS
from rankseg.distance import distance_matrix, footrule_distance
from rankseg.synth import GeneratorConfig, generate, generate_nested


def rank_array(dataset):
    return np.stack([r.profile.ranks for r in dataset.records])


def test_rankings_are_permutations():
    survey = generate(GeneratorConfig(n=40, g=3, seed=0, noise=1.5))
    ranks = rank_array(survey.dataset)
    assert ranks.shape == (40, 5, 5)
    expected = np.arange(1, 6)
    for i in range(40):
        for j in range(5):
            assert np.array_equal(np.sort(ranks[i, j]), expected)


def test_balanced_labels_interleave():
    survey = generate(GeneratorConfig(n=10, g=3, seed=1))
    assert survey.labels.tolist() == [1, 2, 3, 1, 2, 3, 1, 2, 3, 1]
    sizes = np.bincount(survey.labels)[1:]
    assert sizes.max() - sizes.min() <= 1


def test_unbalanced_labels_still_cover_range():
    survey = generate(GeneratorConfig(n=200, g=4, seed=2, balanced=False))
    assert set(np.unique(survey.labels)) == {1, 2, 3, 4}


def test_prototypes_distinct_and_zero_noise_reproduces_them():
    survey = generate(GeneratorConfig(n=12, g=4, seed=3, noise=0.0))
    assert len({p.tobytes() for p in survey.prototypes}) == 4
    ranks = rank_array(survey.dataset)
    for i in range(12):
        assert np.array_equal(ranks[i], survey.prototypes[survey.labels[i] - 1])


def test_noise_increases_distance_to_prototype():
    means = []
    for noise in (0.2, 1.0, 3.0):
        survey = generate(GeneratorConfig(n=150, g=2, seed=4, noise=noise))
        ranks = rank_array(survey.dataset)
        d = [
            footrule_distance(ranks[i], survey.prototypes[survey.labels[i] - 1])
            for i in range(150)
        ]
        means.append(np.mean(d))
    assert means[0] < means[1] < means[2]


def test_numeric_effect_shifts_personality_means():
    survey = generate(
        GeneratorConfig(n=600, g=2, seed=5, noise=0.5, numeric_effect=1.0)
    )
    values = np.array(
        [
            [r.personality[dim] for dim in PERSONALITY_DIMENSIONS]
            for r in survey.dataset.records
        ]
    )
    gap = np.abs(
        values[survey.labels == 1].mean(axis=0) - values[survey.labels == 2].mean(axis=0)
    )
    # means differ by 0 or 2 depending on the sign draw; at least one dim splits
    assert gap.max() > 1.0


def test_zero_effects_leave_covariates_near_null():
    survey = generate(
        GeneratorConfig(n=1000, g=2, seed=6, noise=0.5, numeric_effect=0.0)
    )
    values = np.array(
        [
            [r.personality[dim] for dim in PERSONALITY_DIMENSIONS]
            for r in survey.dataset.records
        ]
    )
    gap = np.abs(
        values[survey.labels == 1].mean(axis=0) - values[survey.labels == 2].mean(axis=0)
    )
    assert gap.max() < 0.25  # ~4 sd of a mean difference at n=500 per side


def test_categorical_effect_tilts_gender_split():
    survey = generate(
        GeneratorConfig(n=2000, g=2, seed=7, noise=0.5, categorical_effect=0.4)
    )
    female = np.array(
        [1.0 if r.sociodemo["gender"] == "female" else 0.0 for r in survey.dataset.records]
    )
    rates = [female[survey.labels == c].mean() for c in (1, 2)]
    # each cluster is tilted to 0.1 or 0.9 (tilt signs may coincide)
    assert all(min(r, 1.0 - r) < 0.2 for r in rates)
    null = generate(GeneratorConfig(n=2000, g=2, seed=7, noise=0.5))
    female0 = np.array(
        [1.0 if r.sociodemo["gender"] == "female" else 0.0 for r in null.dataset.records]
    )
    assert abs(female0.mean() - 0.5) < 0.05


def test_planted_clusters_recoverable_at_low_noise():
    survey = generate(GeneratorConfig(n=60, g=3, seed=8, noise=0.3))
    d = distance_matrix(survey.dataset)
    result = pam(d.values, 3)
    assert adjusted_rand(result.labels, survey.labels) == pytest.approx(1.0)


def test_generator_validates_config():
    with pytest.raises(ValueError):
        GeneratorConfig(n=5, g=6, seed=0)
    with pytest.raises(ValueError):
        GeneratorConfig(n=5, g=0, seed=0)
    with pytest.raises(ValueError):
        GeneratorConfig(n=5, g=2, seed=0, noise=-1.0)
    with pytest.raises(ValueError):
        GeneratorConfig(n=5, g=2, seed=0, categorical_effect=0.5)
    with pytest.raises(ValueError):
        GeneratorConfig(n=5, g=2, seed=0, n_brands=1)


def test_too_many_prototypes_for_tiny_space_errors():
    # 1 category x 2 brands has only 2 distinct rankings
    with pytest.raises(RuntimeError):
        generate(GeneratorConfig(n=9, g=3, seed=0, n_categories=1, n_brands=2))


def test_generate_is_deterministic():
    a = generate(GeneratorConfig(n=30, g=2, seed=9, noise=0.7, numeric_effect=0.4))
    b = generate(GeneratorConfig(n=30, g=2, seed=9, noise=0.7, numeric_effect=0.4))
    assert np.array_equal(rank_array(a.dataset), rank_array(b.dataset))
    assert a.dataset.fingerprint() == b.dataset.fingerprint()
    c = generate(GeneratorConfig(n=30, g=2, seed=10, noise=0.7, numeric_effect=0.4))
    assert a.dataset.fingerprint() != c.dataset.fingerprint()


class TestNested:
    def test_shape_and_cell_balance(self):
        survey = generate_nested(n=160, seed=0)
        assert survey.dataset.n == 160
        sizes = np.bincount(survey.labels)[1:]
        assert np.all(sizes == 20)
        # fine cells balanced within each coarse half
        coarse = (survey.labels - 1) >> 2
        for half in (0, 1):
            cells = survey.labels[coarse == half]
            assert len(set(cells)) == 4

    def test_prototype_separations(self):
        survey = generate_nested(n=80, seed=1)
        p = survey.prototypes
        # coarse halves disagree maximally on the first three categories
        d_coarse = footrule_distance(p[0], p[4], categories=[0, 1, 2])
        assert d_coarse == 66  # 3 categories x reversal distance 22
        # cells inside a half differ only on the fine categories, 22 each
        assert footrule_distance(p[0], p[1]) == 22
        assert footrule_distance(p[0], p[2]) == 22
        assert footrule_distance(p[0], p[3]) == 44

    def test_requires_multiple_of_eight(self):
        with pytest.raises(ValueError):
            generate_nested(n=100)

    def test_coarse_split_recovered_and_covariate_free(self):
        survey = generate_nested(n=160, delta=0.8, noise=0.3, seed=2)
        d = distance_matrix(survey.dataset)
        two = pam(d.values, 2)
        coarse_truth = ((survey.labels - 1) >> 2) + 1
        assert adjusted_rand(two.labels, coarse_truth) == pytest.approx(1.0)
        # personality shifts follow the fine bits, not the coarse split
        values = np.array(
            [
                [r.personality[dim] for dim in PERSONALITY_DIMENSIONS[:2]]
                for r in survey.dataset.records
            ]
        )
        bit1 = ((survey.labels - 1) >> 1) & 1
        bit2 = (survey.labels - 1) & 1
        assert values[bit1 == 1, 0].mean() - values[bit1 == 0, 0].mean() > 1.0
        assert values[bit2 == 1, 1].mean() - values[bit2 == 0, 1].mean() > 1.0
        coarse_gap = np.abs(
            values[coarse_truth == 1].mean(axis=0) - values[coarse_truth == 2].mean(axis=0)
        )
        assert coarse_gap.max() < 0.3

    def test_eight_clusters_match_cells(self):
        survey = generate_nested(n=160, noise=0.2, seed=3)
        d = distance_matrix(survey.dataset)
        eight = pam(d.values, 8)
        assert adjusted_rand(eight.labels, survey.labels) == pytest.approx(1.0)
