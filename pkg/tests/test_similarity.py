import math

import numpy as np
import pytest

from errors import BadDiagonal, EmptyVector, LengthMismatch, NotSquare, NotSymmetric, TooFewFrames
from similarity import (
    METRICS,
    DistanceMatrix,
    distance,
    jacobi_eigenvalues,
    pairwise_distances,
    self_similarity,
    validate_correlation_matrix,
)
from spectral import FeatureMatrix

NON_PSD = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])


def _features(values):
    values = np.asarray(values, dtype=float)
    return FeatureMatrix(
        kind="embedding",
        values=values,
        frame_times=np.arange(values.shape[0]) * 0.5,
        dim_labels=[f"dim:{i}" for i in range(values.shape[1])],
    )


@pytest.fixture
def triad_profiles():
    reference = np.zeros(12)
    reference[[0, 4, 7]] = 0.5
    silence = np.zeros(12)
    loud = np.zeros(12)
    loud[[0, 4, 7]] = 1.0
    return reference, silence, loud


def test_silence_and_loud_triad_are_equally_far(triad_profiles):
    reference, silence, loud = triad_profiles
    d_silence = distance(silence, reference, "euclidean")
    d_loud = distance(loud, reference, "euclidean")
    assert abs(d_silence - d_loud) < 1e-12
    assert d_silence == pytest.approx(math.sqrt(0.75), abs=1e-12)


def test_correlation_ranks_loud_triad_closer(triad_profiles):
    reference, silence, loud = triad_profiles
    assert distance(silence, reference, "correlation") == 1.0
    assert distance(loud, reference, "correlation") < 1e-12


@pytest.mark.parametrize("metric", METRICS)
def test_identity_and_symmetry(metric, rng):
    x, y = rng.normal(size=5), rng.normal(size=5)
    assert distance(x, x, metric) == 0.0
    assert distance(np.zeros(5), np.zeros(5), metric) == 0.0
    assert distance(x, y, metric) == distance(y, x, metric)
    assert distance(x, y, metric) >= 0.0


def test_euclidean_triangle_inequality(rng):
    for _ in range(100):
        x, y, z = rng.normal(size=(3, 6))
        assert distance(x, z) <= distance(x, y) + distance(y, z) + 1e-12


def test_cosine_with_zero_vector():
    assert distance([0.0, 0.0], [1.0, 2.0], "cosine") == 1.0


def test_distance_errors():
    with pytest.raises(LengthMismatch):
        distance([1, 2], [1, 2, 3])
    with pytest.raises(EmptyVector):
        distance([], [])


@pytest.mark.parametrize("metric", METRICS)
def test_ssm_matches_double_loop(metric, rng):
    values = rng.normal(size=(10, 4))
    matrix = self_similarity(_features(values), metric)
    oracle = np.array([[distance(a, b, metric) for b in values] for a in values])
    np.testing.assert_allclose(matrix.values, oracle, rtol=0, atol=1e-12)
    assert np.array_equal(matrix.values, matrix.values.T)
    assert np.all(np.diag(matrix.values) == 0.0)


def test_ssm_identical_frames(rng):
    values = rng.normal(size=(5, 3))
    values[3] = values[1]
    matrix = self_similarity(_features(values), "cosine")
    assert matrix.values[1, 3] == 0.0


def test_ssm_ignores_dimension_order(rng):
    values = rng.normal(size=(8, 5))
    permuted = values[:, [3, 0, 4, 1, 2]]
    for metric in METRICS:
        np.testing.assert_allclose(
            self_similarity(_features(values), metric).values,
            self_similarity(_features(permuted), metric).values,
            rtol=0, atol=1e-12,
        )


def test_ssm_needs_two_frames():
    with pytest.raises(TooFewFrames):
        self_similarity(_features([[1.0, 2.0]]))


def test_pairwise_distances_shape(rng):
    assert pairwise_distances(rng.normal(size=(3, 4)), rng.normal(size=(5, 4)), "correlation").shape == (3, 5)


def test_distance_matrix_validation():
    with pytest.raises(NotSymmetric):
        DistanceMatrix(values=[[0.0, 1.0], [2.0, 0.0]])
    with pytest.raises(BadDiagonal):
        DistanceMatrix(values=[[1.0, 1.0], [1.0, 0.0]])
    with pytest.raises(NotSquare):
        DistanceMatrix(values=np.zeros((2, 3)))


def test_jacobi_matches_symmetric_eigensolver(rng):
    a = rng.normal(size=(6, 6))
    symmetric = (a + a.T) / 2
    np.testing.assert_allclose(jacobi_eigenvalues(symmetric), np.linalg.eigvalsh(symmetric), rtol=0, atol=1e-9)


def test_identity_correlation_is_valid():
    report = validate_correlation_matrix(np.eye(4))
    assert report.valid
    assert report.min_eigenvalue == pytest.approx(1.0, abs=1e-12)
    assert report.triangle_violations == []


def test_non_psd_correlation():
    assert np.linalg.det(NON_PSD) == pytest.approx(-2.888, abs=1e-9)
    report = validate_correlation_matrix(NON_PSD)
    assert report.symmetric and report.unit_diagonal and report.entries_in_range
    assert report.min_eigenvalue < 0
    assert not report.psd
    assert (0, 1, 2) in report.triangle_violations
    assert math.acos(0.9) * 2 < report.angles[0, 2]
    assert not report.valid


def test_gram_matrix_of_unit_vectors_is_valid(rng):
    vectors = rng.normal(size=(6, 5))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    gram = vectors @ vectors.T
    np.fill_diagonal(gram, 1.0)
    report = validate_correlation_matrix((gram + gram.T) / 2)
    assert report.psd
    assert report.triangle_violations == []


def test_psd_3x3_has_no_triangle_violation(rng):
    for _ in range(20):
        a = rng.normal(size=(4, 3))
        cov = a.T @ a
        scale = np.sqrt(np.diag(cov))
        corr = cov / np.outer(scale, scale)
        np.fill_diagonal(corr, 1.0)
        report = validate_correlation_matrix((corr + corr.T) / 2)
        assert report.psd
        assert report.triangle_violations == []


def test_report_json_and_shape_errors():
    report = validate_correlation_matrix(NON_PSD)
    assert '"psd": false' in report.to_json()
    with pytest.raises(NotSquare):
        validate_correlation_matrix(np.ones((2, 3)))
    with pytest.raises(NotSquare):
        validate_correlation_matrix(np.ones((1, 1)))
