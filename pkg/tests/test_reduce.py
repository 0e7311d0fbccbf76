import io
import logging

import numpy as np
import pytest
from scipy.spatial.distance import pdist, squareform

from errors import BadDiagonal, BadRange, KTooLarge, NotSymmetric, PerplexityTooLarge, TooFewPoints
from reduce import (
    Embedding,
    SmoothingConfig,
    classical_mds,
    conditional_affinities,
    lpf_smooth,
    pca_project,
    procrustes_error,
    tsne,
)
from similarity import DistanceMatrix
from spectral import FeatureMatrix


def _features(values, kind="embedding"):
    values = np.asarray(values, dtype=float)
    return FeatureMatrix(
        kind=kind,
        values=values,
        frame_times=np.arange(values.shape[0]) * 0.1,
        dim_labels=[f"dim:{i}" for i in range(values.shape[1])],
    )


# ----------------------------- PCA -----------------------------

def test_pca_reconstructs_low_rank_data(rng):
    data = rng.normal(size=(50, 3)) @ rng.normal(size=(3, 8)) + 5.0
    embedding = pca_project(_features(data), 3)
    components = np.array(embedding.meta["components"])
    mean = np.array(embedding.meta["mean"])
    reconstructed = embedding.points @ components + mean
    assert np.max(np.abs(reconstructed - data)) < 1e-9


def test_pca_explained_variance_matches_covariance(rng):
    data = rng.normal(size=(40, 6)) * [5.0, 3.0, 2.0, 1.0, 0.5, 0.1]
    embedding = pca_project(_features(data), 4)
    eigenvalues = np.sort(np.linalg.eigvalsh(np.cov(data.T)))[::-1]
    np.testing.assert_allclose(embedding.explained_variance, eigenvalues[:4], rtol=0, atol=1e-6)
    assert np.all(np.diff(embedding.explained_variance) <= 0)


def test_pca_of_two_points():
    embedding = pca_project(_features([[0.0, 0.0], [3.0, 4.0]]), 1)
    np.testing.assert_allclose(np.sort(embedding.points[:, 0]), [-2.5, 2.5], atol=1e-12)
    assert embedding.explained_variance[0] == pytest.approx(12.5)


def test_pca_points_are_centered_and_contracted(rng):
    data = rng.normal(size=(30, 5))
    embedding = pca_project(_features(data), 2)
    np.testing.assert_allclose(embedding.points.mean(axis=0), 0.0, atol=1e-12)
    assert np.all(pdist(embedding.points) <= pdist(data) + 1e-12)


def test_pca_errors(rng):
    with pytest.raises(KTooLarge):
        pca_project(_features(rng.normal(size=(10, 8))), 9)
    with pytest.raises(KTooLarge):
        pca_project(_features(rng.normal(size=(10, 8))), 0)
    with pytest.raises(TooFewPoints):
        pca_project(_features([[1.0, 2.0]]), 1)


# ----------------------------- MDS -----------------------------

def test_mds_recovers_planar_configuration(rng):
    points = rng.uniform(-5, 5, size=(20, 2))
    embedding = classical_mds(squareform(pdist(points)), 2)
    assert procrustes_error(points, embedding.points) < 1e-6
    assert embedding.meta["dropped_dimensions"] == 0


def test_mds_of_zero_matrix_is_origin():
    embedding = classical_mds(np.zeros((4, 4)), 2)
    assert np.all(embedding.points == 0.0)


def test_mds_equilateral_triangle():
    distances = DistanceMatrix(values=np.ones((3, 3)) - np.eye(3))
    embedding = classical_mds(distances, 2)
    np.testing.assert_allclose(pdist(embedding.points), 1.0, atol=1e-9)


def test_mds_agrees_with_pca_on_euclidean_distances(rng):
    data = rng.normal(size=(15, 3))
    pca = pca_project(_features(data), 3)
    mds = classical_mds(squareform(pdist(data)), 3)
    assert procrustes_error(pca.points, mds.points) < 1e-8


def test_mds_rejects_invalid_matrices():
    with pytest.raises(NotSymmetric):
        classical_mds(np.array([[0.0, 1.0], [2.0, 0.0]]), 1)
    with pytest.raises(BadDiagonal):
        classical_mds(np.array([[1.0, 1.0], [1.0, 0.0]]), 1)
    with pytest.raises(KTooLarge):
        classical_mds(np.zeros((3, 3)), 4)


def test_mds_warns_on_non_euclidean_distances(caplog):
    # d(0, 3) exceeds d(0, 1) + d(1, 3)
    distances = np.array([[0, 1, 1, 3], [1, 0, 1, 1], [1, 1, 0, 1], [3, 1, 1, 0]], dtype=float)
    with caplog.at_level(logging.INFO, logger="reduce"):
        embedding = classical_mds(distances, 2)
    assert embedding.meta["dropped_dimensions"] >= 1
    warnings = [r for r in caplog.records if r.levelno == logging.WARNING]
    assert any("not Euclidean" in r.getMessage() for r in warnings)


# ----------------------------- t-SNE -----------------------------

@pytest.fixture
def clusters(rng):
    centers = np.array([[0.0] * 5, [10.0] + [0.0] * 4, [0.0, 10.0, 0.0, 0.0, 0.0]])
    data = np.vstack([center + rng.normal(scale=0.5, size=(20, 5)) for center in centers])
    return data, np.repeat(np.arange(3), 20)


def test_tsne_is_deterministic(clusters):
    data, _ = clusters
    first = tsne(_features(data), perplexity=10, seed=7, iterations=300)
    second = tsne(_features(data), perplexity=10, seed=7, iterations=300)
    assert np.array_equal(first.points, second.points)
    assert first.seed == 7


def test_tsne_separates_clusters(clusters):
    data, labels = clusters
    embedding = tsne(_features(data), perplexity=10, seed=42)
    distances = squareform(pdist(embedding.points))
    np.fill_diagonal(distances, np.inf)
    nearest = np.argmin(distances, axis=1)
    assert np.mean(labels[nearest] == labels) >= 0.9


def test_tsne_kl_decreases_after_exaggeration(clusters):
    data, _ = clusters
    embedding = tsne(_features(data), perplexity=10, seed=42)
    history = dict((int(i), kl) for i, kl in embedding.meta["kl_history"])
    assert history[1000] <= history[250]


def test_perplexity_calibration(rng):
    data = rng.normal(size=(30, 4))
    conditional = conditional_affinities(squareform(pdist(data, "sqeuclidean")), 5.0)
    np.testing.assert_allclose(conditional.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.diag(conditional) == 0.0)
    for row in conditional:
        nonzero = row[row > 0]
        entropy = -np.sum(nonzero * np.log2(nonzero))
        assert abs(2.0 ** entropy - 5.0) < 1e-3


def test_tsne_errors(rng):
    with pytest.raises(PerplexityTooLarge):
        tsne(_features(rng.normal(size=(20, 3))), perplexity=30)
    with pytest.raises(TooFewPoints):
        tsne(_features(rng.normal(size=(2, 3))), perplexity=0.5)
    with pytest.raises(BadRange):
        tsne(_features(rng.normal(size=(30, 3))), k=4, perplexity=5)


# ----------------------------- Smoothing -----------------------------

def test_lpf_alpha_one_is_identity(rng):
    features = _features(rng.normal(size=(20, 3)))
    smoothed = lpf_smooth(features, SmoothingConfig(alpha=1.0))
    np.testing.assert_array_equal(smoothed.values, features.values)


def test_lpf_keeps_constants():
    smoothed = lpf_smooth(_features(np.full((15, 2), 3.0)), SmoothingConfig(alpha=0.3))
    np.testing.assert_allclose(smoothed.values, 3.0, rtol=0, atol=1e-12)


def test_lpf_step_response():
    alpha = 0.2
    step = np.concatenate([[0.0], np.ones(20)])[:, None]
    smoothed = lpf_smooth(_features(step), SmoothingConfig(alpha=alpha)).values[:, 0]
    assert smoothed[0] == 0.0
    expected = 1.0 - (1.0 - alpha) ** np.arange(1, 21)
    np.testing.assert_allclose(smoothed[1:], expected, rtol=0, atol=1e-12)


def test_lpf_stays_within_input_range(rng):
    values = rng.uniform(-2, 7, size=(50, 4))
    smoothed = lpf_smooth(_features(values), SmoothingConfig()).values
    assert np.all(smoothed >= values.min(axis=0) - 1e-12)
    assert np.all(smoothed <= values.max(axis=0) + 1e-12)


@pytest.mark.parametrize("alpha", [0.0, -0.1, 1.5])
def test_smoothing_config_range(alpha):
    with pytest.raises(BadRange):
        SmoothingConfig(alpha=alpha)


# ----------------------------- Embedding I/O -----------------------------

def test_embedding_csv_and_json(rng):
    embedding = Embedding(points=rng.normal(size=(6, 2)), method="pca", frame_times=np.arange(6) * 0.5)
    loaded = Embedding.from_csv(io.StringIO(embedding.to_csv()))
    np.testing.assert_array_equal(loaded.points, embedding.points)
    np.testing.assert_array_equal(loaded.frame_times, embedding.frame_times)

    restored = Embedding.from_json(embedding.to_json())
    assert restored.method == "pca"
    np.testing.assert_array_equal(restored.points, embedding.points)


def test_embedding_as_features_for_smoothing(rng):
    embedding = Embedding(points=rng.normal(size=(5, 3)), method="tsne", seed=1)
    features = embedding.as_features()
    assert features.kind == "embedding"
    assert features.dim_labels == ["dim:0", "dim:1", "dim:2"]
