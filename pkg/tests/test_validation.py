"""Silhouettes, Pearson-Gamma and classical scaling against references."""

import numpy as np
import pytest

from rankseg.validation import (
    asw,
    classical_mds,
    pearson_gamma,
    silhouette_values,
)


def naive_silhouette(values, labels):
    n = len(labels)
    out = np.zeros(n)
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            continue
        a = np.mean([values[i, j] for j in own])
        b = min(
            np.mean([values[i, j] for j in range(n) if labels[j] == lab])
            for lab in set(labels)
            if lab != labels[i]
        )
        m = max(a, b)
        out[i] = (b - a) / m if m > 0 else 0.0
    return out


def euclidean_matrix(points):
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


def test_silhouette_matches_naive_reference():
    rng = np.random.default_rng(21)
    for _ in range(20):
        pts = rng.normal(size=(8, 2))
        values = euclidean_matrix(pts)
        labels = rng.integers(1, 4, 8)
        if len(set(labels.tolist())) < 2:
            continue
        mine = silhouette_values(values, labels)
        ref = naive_silhouette(values, labels.tolist())
        assert np.allclose(mine, ref, atol=1e-12)


def test_silhouette_singletons_are_zero():
    values = euclidean_matrix(np.array([[0.0, 0], [1, 0], [5, 0], [9, 9]]))
    labels = [1, 1, 2, 3]
    s = silhouette_values(values, labels)
    assert s[2] == 0.0 and s[3] == 0.0


def test_perfect_separation_gives_high_asw():
    values = np.array(
        [
            [0, 1, 20, 20],
            [1, 0, 20, 20],
            [20, 20, 0, 1],
            [20, 20, 1, 0],
        ],
        dtype=float,
    )
    assert asw(values, [1, 1, 2, 2]) == pytest.approx(0.95)


def test_asw_guards():
    values = euclidean_matrix(np.random.default_rng(1).normal(size=(5, 2)))
    with pytest.raises(ValueError):
        asw(values, [1, 1, 1, 1, 1])
    with pytest.raises(ValueError):
        asw(values[:2, :2], [1, 2])


def test_pearson_gamma_matches_naive_reference():
    rng = np.random.default_rng(33)
    for _ in range(20):
        pts = rng.normal(size=(8, 2))
        values = euclidean_matrix(pts)
        labels = rng.integers(1, 3, 8)
        if len(set(labels.tolist())) < 2:
            continue
        dist, sep = [], []
        for i in range(8):
            for j in range(i + 1, 8):
                dist.append(values[i, j])
                sep.append(1.0 if labels[i] != labels[j] else 0.0)
        ref = np.corrcoef(dist, sep)[0, 1]
        assert pearson_gamma(values, labels) == pytest.approx(ref, abs=1e-12)


def test_pearson_gamma_degenerate_inputs_raise():
    flat = np.zeros((4, 4))
    with pytest.raises(ValueError):
        pearson_gamma(flat, [1, 1, 2, 2])
    values = euclidean_matrix(np.random.default_rng(2).normal(size=(4, 2)))
    with pytest.raises(ValueError):
        pearson_gamma(values, [1, 1, 1, 1])


def test_mds_recovers_planted_euclidean_configuration():
    rng = np.random.default_rng(7)
    pts = rng.normal(size=(30, 2)) * 3.0
    values = euclidean_matrix(pts)
    emb = classical_mds(values, k=2)
    rebuilt = euclidean_matrix(emb.coords)
    assert np.allclose(rebuilt, values, rtol=1e-9, atol=1e-9)
    assert emb.eigenvalues[0] > 0 and emb.eigenvalues[1] > 0
    # distances carry no information beyond 2 dimensions here
    assert abs(emb.eigenvalues[2]) < 1e-8 * emb.eigenvalues[0]


def test_mds_coordinates_are_centered_and_sign_fixed():
    rng = np.random.default_rng(11)
    pts = rng.normal(size=(12, 2))
    values = euclidean_matrix(pts)
    emb = classical_mds(values, k=2)
    assert np.allclose(emb.coords.mean(axis=0), 0.0, atol=1e-10)
    for axis in range(2):
        col = emb.coords[:, axis]
        assert col[np.argmax(np.abs(col))] > 0
    again = classical_mds(values, k=2)
    assert np.array_equal(emb.coords, again.coords)


def test_mds_collinear_points_use_one_axis():
    xs = np.array([[0.0], [1.0], [2.0], [5.0], [9.0]])
    values = euclidean_matrix(xs)
    emb = classical_mds(values, k=2)
    assert emb.positive_dimensions == 1
    assert np.allclose(emb.coords[:, 1], 0.0)
    gaps = np.abs(np.subtract.outer(emb.coords[:, 0], emb.coords[:, 0]))
    assert np.allclose(gaps, values, atol=1e-9)


def test_mds_identical_points_embed_at_origin():
    values = np.zeros((4, 4))
    emb = classical_mds(values, k=2)
    assert np.allclose(emb.coords, 0.0)
    assert emb.positive_dimensions == 0


def test_mds_non_euclidean_distances_keep_negative_eigenvalues():
    # triangle inequality holds but no Euclidean embedding exists
    values = np.array(
        [
            [0, 2, 2, 1],
            [2, 0, 2, 1],
            [2, 2, 0, 1],
            [1, 1, 1, 0],
        ],
        dtype=float,
    )
    emb = classical_mds(values, k=2)
    assert emb.eigenvalues.min() < -1e-9
    assert emb.negative_share > 0


def test_mds_needs_three_points():
    with pytest.raises(ValueError):
        classical_mds(np.array([[0.0, 1.0], [1.0, 0.0]]), k=1)
