"""
Dimensionality reduction and temporal smoothing.

Features:
- PCA through the SVD of the centered data matrix
- Classical (Torgerson) MDS from a distance matrix
- Exact t-SNE with perplexity calibration, early exaggeration and momentum
- One-pole low-pass smoothing of frame sequences
- Procrustes residual for comparing configurations
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import orthogonal_procrustes
from scipy.signal import lfilter
from scipy.spatial.distance import pdist, squareform

from errors import BadRange, KTooLarge, PerplexityTooLarge, TooFewPoints
from similarity import DistanceMatrix, check_distance_values
from spectral import FeatureMatrix

logger = logging.getLogger(__name__)

METHODS = ("pca", "mds", "tsne")

# t-SNE optimisation schedule
EXAGGERATION = 12.0
EXAGGERATION_ITERATIONS = 250
LEARNING_RATE = 200.0
INITIAL_MOMENTUM = 0.5
FINAL_MOMENTUM = 0.8
MIN_GAIN = 0.01
PERPLEXITY_TOL = 1e-4
MAX_BISECTIONS = 50
KL_EVERY = 50


# ----------------------------- Data classes -----------------------------

@dataclass
class Embedding:
    points: np.ndarray
    method: str
    explained_variance: Optional[np.ndarray] = None
    seed: Optional[int] = None
    frame_times: Optional[np.ndarray] = None
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if self.method not in METHODS:
            raise BadRange(f"Unknown embedding method {self.method!r}")
        if self.explained_variance is not None:
            self.explained_variance = np.asarray(self.explained_variance, dtype=np.float64)
            if np.any(self.explained_variance < 0) or np.any(np.diff(self.explained_variance) > 0):
                raise BadRange("explained_variance must be non-negative and non-increasing")
        if self.frame_times is not None:
            self.frame_times = np.asarray(self.frame_times, dtype=np.float64)
            if self.frame_times.size != self.points.shape[0]:
                raise BadRange(f"{self.frame_times.size} frame times for {self.points.shape[0]} points")

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def k(self) -> int:
        return self.points.shape[1]

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.points, columns=[f"dim:{i}" for i in range(self.k)])
        if self.frame_times is not None:
            df.insert(0, "frame_time", self.frame_times)
        df.insert(0, "point", np.arange(self.n_points))
        return df

    def to_csv(self, path=None):
        return self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")

    def to_json(self) -> str:
        doc = {
            "method": self.method,
            "points": self.points.tolist(),
            "explained_variance": None if self.explained_variance is None else self.explained_variance.tolist(),
            "seed": self.seed,
            "frame_times": None if self.frame_times is None else self.frame_times.tolist(),
            "meta": self.meta,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Embedding":
        doc = json.loads(text)
        return cls(
            points=doc["points"],
            method=doc["method"],
            explained_variance=doc.get("explained_variance"),
            seed=doc.get("seed"),
            frame_times=doc.get("frame_times"),
            meta=doc.get("meta", {}),
        )

    @classmethod
    def from_csv(cls, path_or_buffer, method: str = "pca") -> "Embedding":
        df = pd.read_csv(path_or_buffer)
        dims = [c for c in df.columns if str(c).startswith("dim:")]
        frame_times = df["frame_time"].to_numpy(dtype=np.float64) if "frame_time" in df.columns else None
        return cls(points=df[dims].to_numpy(dtype=np.float64), method=method, frame_times=frame_times)

    def as_features(self) -> FeatureMatrix:
        """View as a FeatureMatrix of kind embedding (for smoothing and heatmaps)."""
        times = self.frame_times if self.frame_times is not None else np.arange(self.n_points, dtype=np.float64)
        return FeatureMatrix(
            kind="embedding",
            values=self.points,
            frame_times=times,
            dim_labels=[f"dim:{i}" for i in range(self.k)],
            meta={"method": self.method},
        )

    @classmethod
    def from_features(cls, features: FeatureMatrix, method: str) -> "Embedding":
        return cls(points=features.values, method=method, frame_times=features.frame_times, meta=dict(features.meta))


@dataclass(frozen=True)
class SmoothingConfig:
    alpha: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise BadRange(f"alpha must be in (0, 1], got {self.alpha}")


# ----------------------------- Helpers -----------------------------

def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    if vectors.size == 0:
        return vectors
    rows = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[rows, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def procrustes_error(a, b) -> float:
    """Frobenius residual after optimally translating and rotating b onto a."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise BadRange(f"Configurations have shapes {a.shape} and {b.shape}")
    a_centered = a - a.mean(axis=0)
    b_centered = b - b.mean(axis=0)
    rotation, _ = orthogonal_procrustes(b_centered, a_centered)
    return float(np.linalg.norm(b_centered @ rotation - a_centered))


# ----------------------------- PCA / MDS -----------------------------

def pca_project(features: FeatureMatrix, k: int) -> Embedding:
    """Project onto the top-k principal axes of the centered frames.

    Each component's largest-magnitude loading is made positive, and
    explained_variance is the squared singular value over (n - 1).
    """
    data = features.values
    n, d = data.shape
    if n < 2:
        raise TooFewPoints(f"PCA needs at least 2 frames, got {n}")
    if not 1 <= k <= d:
        raise KTooLarge(f"k={k} is outside 1..{d} (feature dimensionality)")

    centered = data - data.mean(axis=0)
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    loadings = _fix_signs(vt[:k].T)
    points = centered @ loadings
    variance = singular[:k] ** 2 / (n - 1)
    if loadings.shape[1] < k:
        # fewer frames than requested components
        missing = k - loadings.shape[1]
        points = np.hstack([points, np.zeros((n, missing))])
        variance = np.concatenate([variance, np.zeros(missing)])

    total = float(np.sum(singular ** 2) / (n - 1))
    if total > 0:
        logger.info(f"PCA: {k} component(s) explain {variance.sum() / total:.1%} of the variance")
    return Embedding(
        points=points,
        method="pca",
        explained_variance=variance,
        frame_times=features.frame_times,
        meta={
            "source_kind": features.kind,
            "components": loadings.T.tolist(),
            "mean": data.mean(axis=0).tolist(),
        },
    )


def classical_mds(distances, k: int) -> Embedding:
    """Torgerson MDS: double-center the squared distances and embed with the top-k positive eigenpairs."""
    values = distances.values if isinstance(distances, DistanceMatrix) else np.asarray(distances, dtype=np.float64)
    check_distance_values(values)
    n = values.shape[0]
    if not 1 <= k <= n:
        raise KTooLarge(f"k={k} is outside 1..{n} (number of points)")

    centering = np.eye(n) - np.ones((n, n)) / n
    b = -0.5 * centering @ (values ** 2) @ centering
    b = (b + b.T) / 2.0
    eigenvalues, eigenvectors = np.linalg.eigh(b)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues, eigenvectors = eigenvalues[order], eigenvectors[:, order]

    tol = 1e-12 * max(1.0, float(np.abs(eigenvalues).max()))
    positive = eigenvalues > tol
    dropped = int(np.sum(eigenvalues < -tol))
    if dropped:
        logger.warning(f"MDS: dropped {dropped} negative-eigenvalue dimension(s); distances are not Euclidean")

    keep = np.flatnonzero(positive)[:k]
    points = np.zeros((n, k))
    vectors = _fix_signs(eigenvectors[:, keep])
    points[:, :keep.size] = vectors * np.sqrt(eigenvalues[keep])
    return Embedding(
        points=points,
        method="mds",
        meta={"eigenvalues": eigenvalues[:k].tolist(), "dropped_dimensions": dropped},
    )


# ----------------------------- t-SNE -----------------------------

def _row_affinities(sq_dist: np.ndarray, beta: float) -> Tuple[np.ndarray, float]:
    """Gaussian conditional distribution for one row and its entropy in bits."""
    shifted = sq_dist - sq_dist.min()
    weights = np.exp(-shifted * beta)
    total = weights.sum()
    entropy = np.log(total) + beta * np.sum(shifted * weights) / total
    return weights / total, float(entropy / np.log(2.0))


def conditional_affinities(sq_distances: np.ndarray, perplexity: float,
                           tol: float = PERPLEXITY_TOL, max_iter: int = MAX_BISECTIONS) -> np.ndarray:
    """Row-stochastic P_{j|i}, with each row's Gaussian precision bisected to the target log2-perplexity."""
    n = sq_distances.shape[0]
    target = np.log2(perplexity)
    conditional = np.zeros((n, n))
    unconverged = 0
    for i in range(n):
        others = np.concatenate([np.arange(i), np.arange(i + 1, n)])
        row = sq_distances[i, others]
        beta, beta_min, beta_max = 1.0, -np.inf, np.inf
        probabilities, entropy = _row_affinities(row, beta)
        for _ in range(max_iter):
            diff = entropy - target
            if abs(diff) < tol:
                break
            if diff > 0:
                beta_min = beta
                beta = beta * 2.0 if beta_max == np.inf else (beta + beta_max) / 2.0
            else:
                beta_max = beta
                beta = beta / 2.0 if beta_min == -np.inf else (beta + beta_min) / 2.0
            probabilities, entropy = _row_affinities(row, beta)
        else:
            unconverged += 1
        conditional[i, others] = probabilities
    if unconverged:
        logger.warning(f"Perplexity search did not converge for {unconverged} point(s)")
    return conditional


def _student_t(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    numerator = 1.0 / (1.0 + squareform(pdist(points, "sqeuclidean")))
    np.fill_diagonal(numerator, 0.0)
    q = np.maximum(numerator / numerator.sum(), 1e-12)
    return numerator, q


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.sum(p * np.log(p / q)))


def tsne(features: FeatureMatrix, k: int = 2, perplexity: float = 30.0, seed: int = 42,
         iterations: int = 1000) -> Embedding:
    """Exact t-SNE, deterministic for a given seed.

    Args:
        features (FeatureMatrix): points to embed, one per frame
        k (int): output dimensionality, 2 or 3
        perplexity (float): effective neighbour count; needs n >= 3 * perplexity
        seed (int): seeds the 1e-4 scaled standard-normal initialisation
        iterations (int): gradient-descent steps

    Returns:
        Embedding: with meta["kl_history"] as [iteration, KL] pairs
    """
    data = features.values
    n = data.shape[0]
    if n < 3:
        raise TooFewPoints(f"t-SNE needs at least 3 points, got {n}")
    if perplexity <= 0 or n < 3 * perplexity:
        raise PerplexityTooLarge(f"perplexity {perplexity} needs at least {3 * perplexity:g} points, got {n}")
    if k not in (2, 3):
        raise BadRange(f"t-SNE embeds into 2 or 3 dimensions, got k={k}")

    conditional = conditional_affinities(squareform(pdist(data, "sqeuclidean")), perplexity)
    p = np.maximum((conditional + conditional.T) / (2.0 * n), 1e-12)

    rng = np.random.default_rng(seed)
    points = rng.standard_normal((n, k)) * 1e-4
    update = np.zeros_like(points)
    gains = np.ones_like(points)
    kl_history = []

    for iteration in range(iterations):
        exaggeration = EXAGGERATION if iteration < EXAGGERATION_ITERATIONS else 1.0
        momentum = INITIAL_MOMENTUM if iteration < EXAGGERATION_ITERATIONS else FINAL_MOMENTUM

        numerator, q = _student_t(points)
        if iteration % KL_EVERY == 0:
            kl_history.append([iteration, _kl(p, q)])

        weighted = (exaggeration * p - q) * numerator
        grad = 4.0 * (np.diag(weighted.sum(axis=1)) - weighted) @ points

        flipped = update * grad < 0.0
        gains = np.where(flipped, gains + 0.2, gains * 0.8)
        np.clip(gains, MIN_GAIN, None, out=gains)
        update = momentum * update - LEARNING_RATE * gains * grad
        points = points + update
        points = points - points.mean(axis=0)

    final_kl = _kl(p, _student_t(points)[1])
    kl_history.append([iterations, final_kl])
    logger.info(f"t-SNE: {n} points, perplexity {perplexity}, {iterations} iterations, final KL {final_kl:.4f}")
    return Embedding(
        points=points,
        method="tsne",
        seed=seed,
        frame_times=features.frame_times,
        meta={"perplexity": perplexity, "iterations": iterations, "kl_history": kl_history},
    )


# ----------------------------- Smoothing -----------------------------

def lpf_smooth(features: FeatureMatrix, cfg: SmoothingConfig) -> FeatureMatrix:
    """One-pole low-pass per dimension: y_0 = x_0, y_t = a*x_t + (1 - a)*y_{t-1}."""
    x = features.values
    alpha = cfg.alpha
    # initial state makes y_0 = x_0
    zi = ((1.0 - alpha) * x[0])[None, :]
    smoothed, _ = lfilter([alpha], [1.0, -(1.0 - alpha)], x, axis=0, zi=zi)
    return FeatureMatrix(
        kind=features.kind,
        values=smoothed,
        frame_times=features.frame_times,
        dim_labels=features.dim_labels,
        meta=dict(features.meta, lpf_alpha=alpha),
    )
