"""Random forest: determinism, OOB behavior, grouped importances."""

import numpy as np
import pytest

from rankseg.forest import (
    ForestParams,
    baseline_error,
    fit_forest,
    oob_error,
    permutation_importance,
)
from rankseg.mlr import DesignMatrix
from rankseg.synth import GeneratorConfig, generate


def separable_data(n=120, seed=0):
    rng = np.random.default_rng(seed)
    y = np.repeat([1, 2, 3], n // 3)
    X = rng.normal(size=(n, 4))
    X[:, 0] += 5.0 * y  # decisive column
    return X, y


def noise_data(n=150, m=5, seed=1):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, m)), rng.integers(1, 3, n)


def test_same_seed_same_forest_different_seed_differs():
    X, y = separable_data()
    a = fit_forest(X, y, ForestParams(n_trees=50, seed=9))
    b = fit_forest(X, y, ForestParams(n_trees=50, seed=9))
    assert np.array_equal(a.oob_votes, b.oob_votes)
    ia = permutation_importance(a)
    ib = permutation_importance(b)
    assert np.array_equal(ia.importances, ib.importances)
    c = fit_forest(X, y, ForestParams(n_trees=50, seed=10))
    assert not np.array_equal(a.oob_votes, c.oob_votes)


def test_every_row_gets_out_of_bag_votes():
    X, y = noise_data(n=60)
    model = fit_forest(X, y, ForestParams(n_trees=12, seed=3))
    assert np.all(model.oob_votes.sum(axis=1) > 0)


def test_uncovered_rows_excluded_from_oob_error_with_warning():
    # a single tree leaves its in-bag rows without any OOB vote
    X, y = separable_data(n=30)
    model = fit_forest(X, y, ForestParams(n_trees=1, seed=0))
    n_uncovered = int((model.oob_votes.sum(axis=1) == 0).sum())
    assert n_uncovered > 0
    with pytest.warns(UserWarning, match=f"{n_uncovered} of 30"):
        err = oob_error(model)
    assert 0.0 <= err <= 1.0


def test_separable_data_has_low_oob_error():
    X, y = separable_data()
    model = fit_forest(X, y, ForestParams(n_trees=150, seed=4))
    err = oob_error(model)
    base = baseline_error(y)
    assert base == pytest.approx(2 / 3)
    assert err < 0.05
    assert np.mean(model.predict(X) != y) <= err


def test_single_class_constant_classifier():
    X = np.random.default_rng(2).normal(size=(20, 3))
    y = np.full(20, 7)
    with pytest.warns(UserWarning, match="single class"):
        model = fit_forest(X, y, ForestParams(n_trees=20, seed=0))
    assert oob_error(model) == 0.0
    assert np.all(model.predict(X) == 7)


def test_decisive_variable_ranks_first():
    X, y = separable_data(seed=5)
    model = fit_forest(X, y, ForestParams(n_trees=200, seed=6))
    report = permutation_importance(model)
    assert report.ranking()[0] == "x0"
    assert report.importances[0] > 0.3


def test_noise_importances_near_zero():
    X, y = noise_data(n=150, m=5, seed=7)
    model = fit_forest(X, y, ForestParams(n_trees=300, seed=8))
    report = permutation_importance(model)
    assert np.all(np.abs(report.importances) <= 0.03)


def test_duplicated_noise_column_barely_moves_oob():
    # averaged over seeds: a single draw moves by sampling noise alone
    diffs = []
    for seed in range(5):
        X, y = noise_data(n=150, m=5, seed=90 + seed)
        base = oob_error(fit_forest(X, y, ForestParams(n_trees=200, seed=seed)))
        X2 = np.column_stack([X, X[:, 0]])
        dup = oob_error(fit_forest(X2, y, ForestParams(n_trees=200, seed=seed)))
        diffs.append(dup - base)
    assert abs(np.mean(diffs)) <= 0.03


def test_importance_dilutes_across_correlated_copies():
    X, y = separable_data(n=150, seed=11)
    lone = permutation_importance(
        fit_forest(X, y, ForestParams(n_trees=200, seed=12))
    )
    lone_imp = lone.importances[0]
    X2 = np.column_stack([X, X[:, 0]])
    pair = permutation_importance(
        fit_forest(X2, y, ForestParams(n_trees=200, seed=12))
    )
    by_name = dict(zip(pair.names, pair.importances))
    assert by_name["x0"] > 0 and by_name["x4"] > 0
    assert by_name["x0"] < lone_imp and by_name["x4"] < lone_imp


def test_forest_beats_single_tree_on_average():
    wins = 0
    for seed in range(5):
        X, y = separable_data(n=90, seed=20 + seed)
        X[:, 0] = X[:, 0] / 3 + np.random.default_rng(seed).normal(size=90)  # harder
        many = oob_error(fit_forest(X, y, ForestParams(n_trees=120, seed=seed)))
        one = oob_error(fit_forest(X, y, ForestParams(n_trees=1, seed=seed)))
        if many <= one:
            wins += 1
    assert wins >= 3


def test_grouped_importance_treats_variable_as_one_unit():
    survey = generate(
        GeneratorConfig(n=90, g=2, seed=13, noise=0.5, categorical_effect=0.35)
    )
    from rankseg.pipeline import forest_design

    rows = list(range(survey.dataset.n))
    X, names, groups = forest_design(survey.dataset, rows)
    assert set(groups) == {
        "gender",
        "age",
        "extraversion",
        "agreeableness",
        "conscientiousness",
        "emotional_stability",
        "openness",
    }
    assert len(groups["gender"]) == 2  # every level is a column for trees
    model = fit_forest(
        X, survey.labels, ForestParams(n_trees=100, seed=14), column_names=names, groups=groups
    )
    report = permutation_importance(model)
    assert set(report.names) == set(groups)


def test_design_matrix_input_drops_intercept():
    survey = generate(GeneratorConfig(n=60, g=2, seed=15, noise=0.5))
    design = DesignMatrix.build(survey.dataset, survey.labels)
    model = fit_forest(design, params=ForestParams(n_trees=30, seed=16))
    assert "(intercept)" not in model.column_names
    assert model.X.shape[1] == design.p - 1


def test_mtry_default_and_param_validation():
    X, y = noise_data(n=40, m=9)
    model = fit_forest(X, y, ForestParams(n_trees=5, seed=0))
    assert model.mtry == 3
    with pytest.raises(ValueError):
        ForestParams(n_trees=0)
    with pytest.raises(ValueError):
        ForestParams(mtry=0)
    with pytest.raises(ValueError):
        fit_forest(X[:1], y[:1], ForestParams(n_trees=2))
