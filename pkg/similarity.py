"""
Distances, self-similarity matrices and correlation-matrix validity checks.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from errors import (
    BadDiagonal,
    BadRange,
    EmptyVector,
    LengthMismatch,
    NotSquare,
    NotSymmetric,
    TooFewFrames,
)

logger = logging.getLogger(__name__)

METRICS = ("euclidean", "cosine", "correlation")
SYMMETRY_TOL = 1e-12


# ----------------------------- Data classes -----------------------------

@dataclass
class DistanceMatrix:
    values: np.ndarray
    metric: str = "euclidean"
    labels: Optional[List[str]] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        check_distance_values(self.values)
        if self.metric not in METRICS:
            raise BadRange(f"Unknown metric {self.metric!r}; expected one of {METRICS}")
        n = self.values.shape[0]
        if self.labels is None:
            self.labels = [str(i) for i in range(n)]
        self.labels = [str(label) for label in self.labels]
        if len(self.labels) != n:
            raise LengthMismatch(f"{len(self.labels)} labels for {n} points")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def to_csv(self, path=None):
        df = pd.DataFrame(self.values, index=self.labels, columns=self.labels)
        return df.to_csv(path, index_label="label", float_format="%.17g", lineterminator="\n")

    @classmethod
    def from_csv(cls, path_or_buffer, metric: str = "euclidean") -> "DistanceMatrix":
        df = pd.read_csv(path_or_buffer, index_col=0)
        return cls(values=df.to_numpy(dtype=np.float64), metric=metric, labels=[str(c) for c in df.columns])


@dataclass
class ValidityReport:
    symmetric: bool
    unit_diagonal: bool
    entries_in_range: bool
    min_eigenvalue: float
    psd: bool
    angles: np.ndarray
    triangle_violations: List[Tuple[int, int, int]] = field(default_factory=list)
    tolerance: float = 1e-9

    @property
    def valid(self) -> bool:
        return (self.symmetric and self.unit_diagonal and self.entries_in_range
                and self.psd and not self.triangle_violations)

    def to_dict(self):
        return {
            "symmetric": self.symmetric,
            "unit_diagonal": self.unit_diagonal,
            "entries_in_range": self.entries_in_range,
            "min_eigenvalue": self.min_eigenvalue,
            "psd": self.psd,
            "valid": self.valid,
            "angles": self.angles.tolist(),
            "triangle_violations": [list(t) for t in self.triangle_violations],
            "tolerance": self.tolerance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def check_distance_values(values: np.ndarray):
    """Raise unless values is a square, symmetric, zero-diagonal, non-negative matrix."""
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise NotSquare(f"Distance matrix must be square, got shape {values.shape}")
    if not np.allclose(values, values.T, rtol=0.0, atol=SYMMETRY_TOL):
        raise NotSymmetric("Distance matrix is not symmetric")
    if np.any(np.diag(values) != 0.0):
        raise BadDiagonal("Distance matrix diagonal must be zero")
    if np.any(values < 0):
        raise BadRange("Distances must be non-negative")


# ----------------------------- Distances -----------------------------

def distance(x, y, metric: str = "euclidean") -> float:
    """Distance between two equally long vectors.

    cosine = 1 - cos(x, y) and correlation = 1 - pearson(x, y); the
    similarity is taken as 0 when a vector has zero norm (cosine) or zero
    variance (correlation). Identical vectors are at distance 0.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise LengthMismatch(f"Vectors have lengths {x.size} and {y.size}")
    if x.size == 0:
        raise EmptyVector("Cannot measure distance between empty vectors")
    if metric not in METRICS:
        raise BadRange(f"Unknown metric {metric!r}; expected one of {METRICS}")
    if np.array_equal(x, y):
        return 0.0

    if metric == "euclidean":
        return float(np.sqrt(np.sum((x - y) ** 2)))
    if metric == "correlation":
        x = x - x.mean()
        y = y - y.mean()
    norm = np.linalg.norm(x) * np.linalg.norm(y)
    similarity = float(x @ y / norm) if norm > 0 else 0.0
    return max(0.0, 1.0 - similarity)


def pairwise_distances(a, b, metric: str = "euclidean") -> np.ndarray:
    """Rectangular distance matrix between the rows of a and the rows of b."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise LengthMismatch(f"Row lengths differ: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[1] == 0:
        raise EmptyVector("Cannot measure distance between empty vectors")
    if metric not in METRICS:
        raise BadRange(f"Unknown metric {metric!r}; expected one of {METRICS}")

    if metric == "euclidean":
        return cdist(a, b, "euclidean")
    if metric == "correlation":
        a = a - a.mean(axis=1, keepdims=True)
        b = b - b.mean(axis=1, keepdims=True)
    norms = np.outer(np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1))
    similarity = np.divide(a @ b.T, norms, out=np.zeros_like(norms), where=norms > 0)
    result = np.maximum(0.0, 1.0 - similarity)
    # identical rows are at distance 0 even when the similarity is undefined
    result[cdist(a, b, "euclidean") == 0.0] = 0.0
    return result


def self_similarity(features, metric: str = "cosine") -> DistanceMatrix:
    """Frame-by-frame distance matrix of a FeatureMatrix."""
    if features.n_frames < 2:
        raise TooFewFrames(f"A self-similarity matrix needs at least 2 frames, got {features.n_frames}")
    values = pairwise_distances(features.values, features.values, metric)
    # exact symmetry and zero diagonal from the upper triangle
    upper = np.triu(values, k=1)
    values = upper + upper.T
    logger.info(f"Self-similarity matrix: {features.n_frames} x {features.n_frames}, metric {metric}")
    return DistanceMatrix(
        values=values,
        metric=metric,
        labels=[f"{t:.6f}" for t in features.frame_times],
    )


# ----------------------------- Correlation validity -----------------------------

def jacobi_eigenvalues(matrix, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending."""
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    scale = max(1.0, float(np.linalg.norm(a)))
    for sweep in range(max_sweeps):
        off = np.sqrt(np.sum(a ** 2) - np.sum(np.diag(a) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
    else:
        logger.warning(f"Jacobi iteration stopped after {max_sweeps} sweeps without converging")
    return np.sort(np.diag(a))


def correlation_angles(r) -> np.ndarray:
    return np.arccos(np.clip(np.asarray(r, dtype=np.float64), -1.0, 1.0))


def validate_correlation_matrix(r, tol: float = 1e-9) -> ValidityReport:
    """Check a correlation matrix for symmetry, unit diagonal, range, PSD and angle triangle inequalities."""
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] != r.shape[1] or r.shape[0] < 2:
        raise NotSquare(f"Need a square matrix of size >= 2, got shape {r.shape}")
    n = r.shape[0]

    symmetric = bool(np.allclose(r, r.T, rtol=0.0, atol=tol))
    unit_diagonal = bool(np.allclose(np.diag(r), 1.0, rtol=0.0, atol=tol))
    entries_in_range = bool(np.all((r >= -1.0 - tol) & (r <= 1.0 + tol)))
    min_eigenvalue = float(jacobi_eigenvalues((r + r.T) / 2.0)[0])
    angles = correlation_angles(r)

    violations = []
    for i, j, k in itertools.combinations(range(n), 3):
        outer = angles[i, k]
        if outer > angles[i, j] + angles[j, k] + tol or outer < abs(angles[i, j] - angles[j, k]) - tol:
            violations.append((i, j, k))

    report = ValidityReport(
        symmetric=symmetric,
        unit_diagonal=unit_diagonal,
        entries_in_range=entries_in_range,
        min_eigenvalue=min_eigenvalue,
        psd=min_eigenvalue >= -tol,
        angles=angles,
        triangle_violations=violations,
        tolerance=tol,
    )
    if not report.valid:
        logger.warning(
            f"Correlation matrix is not valid: psd={report.psd}, {len(violations)} triangle violation(s)"
        )
    return report
