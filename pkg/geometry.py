"""
Distance metrics between feature vectors and between sets of feature vectors
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

ArrayLike = Union[Sequence[float], np.ndarray]


class DimensionMismatchError(ValueError):
    """Raised when vectors or weights do not share a feature count."""


class EmptySetError(ValueError):
    """Raised when a set distance is requested for an empty point set."""


class MetricKind(str, Enum):
    MANHATTAN = 'l1'
    EUCLIDEAN = 'l2'
    CHEBYSHEV = 'linf'


_CDIST_NAMES = {
    MetricKind.MANHATTAN: 'cityblock',
    MetricKind.EUCLIDEAN: 'euclidean',
    MetricKind.CHEBYSHEV: 'chebyshev',
}

_MINKOWSKI_P = {
    MetricKind.MANHATTAN: 1.0,
    MetricKind.EUCLIDEAN: 2.0,
    MetricKind.CHEBYSHEV: np.inf,
}

_DUAL = {
    MetricKind.MANHATTAN: MetricKind.CHEBYSHEV,
    MetricKind.EUCLIDEAN: MetricKind.EUCLIDEAN,
    MetricKind.CHEBYSHEV: MetricKind.MANHATTAN,
}


def as_vector(values: ArrayLike) -> np.ndarray:
    """Validate and convert a feature vector to a 1-D float array."""
    vector = np.asarray(values, dtype=float)
    if vector.ndim != 1 or vector.size == 0:
        raise ValueError(f"Feature vector must be a non-empty 1-D sequence, got shape {vector.shape}")
    if not np.all(np.isfinite(vector)):
        raise ValueError("Feature vector contains NaN or infinite values")
    return vector


def as_point_set(points: Union[Sequence[ArrayLike], np.ndarray]) -> np.ndarray:
    """Validate and convert a point set to a 2-D float array (one row per point)."""
    array = np.asarray(points, dtype=float)
    if array.size == 0:
        raise EmptySetError("Set distances are undefined for empty point sets")
    if array.ndim == 1:
        array = array.reshape(1, -1)
    if array.ndim != 2:
        raise ValueError(f"Point set must be 2-D, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError("Point set contains NaN or infinite values")
    return array


@dataclass(frozen=True)
class DistanceMetric:
    """Manhattan, Euclidean or Chebyshev distance with optional per-feature weights.

    Weights multiply each coordinate difference before aggregation, so the
    weighted distance is the plain distance between ``w * a`` and ``w * b``.
    """

    kind: MetricKind = MetricKind.EUCLIDEAN
    weights: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', MetricKind(self.kind))
        if self.weights is not None:
            weights = tuple(float(w) for w in self.weights)
            if not weights or any(w < 0 or not np.isfinite(w) for w in weights):
                raise ValueError("Metric weights must be finite and non-negative")
            if not any(w > 0 for w in weights):
                raise ValueError("Metric weights need at least one positive entry")
            object.__setattr__(self, 'weights', weights)

    @classmethod
    def from_name(cls, name: str, weights: Optional[Sequence[float]] = None) -> 'DistanceMetric':
        return cls(MetricKind(name), tuple(weights) if weights is not None else None)

    @property
    def minkowski_p(self) -> float:
        return _MINKOWSKI_P[self.kind]

    @property
    def dual(self) -> MetricKind:
        """Kind of the dual norm, used for distances to hyperplanes."""
        return _DUAL[self.kind]

    def scale(self, points: np.ndarray) -> np.ndarray:
        """Apply the per-feature weights to the last axis of ``points``."""
        if self.weights is None:
            return points
        if points.shape[-1] != len(self.weights):
            raise DimensionMismatchError(
                f"Metric has {len(self.weights)} weights but points have {points.shape[-1]} features"
            )
        return points * np.asarray(self.weights)

    def norm(self, vectors: np.ndarray) -> np.ndarray:
        """Norm of each vector along the last axis."""
        return np.linalg.norm(self.scale(np.asarray(vectors, dtype=float)), ord=self.minkowski_p, axis=-1)

    def pairwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Full distance matrix between the rows of ``a`` and the rows of ``b``."""
        if a.shape[1] != b.shape[1]:
            raise DimensionMismatchError(f"Point dimensions differ: {a.shape[1]} vs {b.shape[1]}")
        return cdist(self.scale(a), self.scale(b), metric=_CDIST_NAMES[self.kind])

    def to_point(self, points: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Distances from every row of ``points`` to the single vector ``x``."""
        if points.shape[-1] != x.shape[-1]:
            raise DimensionMismatchError(f"Point dimensions differ: {points.shape[-1]} vs {x.shape[-1]}")
        return self.norm(points - x)


EUCLIDEAN = DistanceMetric(MetricKind.EUCLIDEAN)
MANHATTAN = DistanceMetric(MetricKind.MANHATTAN)
CHEBYSHEV = DistanceMetric(MetricKind.CHEBYSHEV)


def distance(metric: DistanceMetric, a: ArrayLike, b: ArrayLike) -> float:
    """Distance between two feature vectors."""
    a_vec, b_vec = as_vector(a), as_vector(b)
    if a_vec.shape != b_vec.shape:
        raise DimensionMismatchError(f"Vectors have different lengths: {a_vec.size} vs {b_vec.size}")
    return float(metric.norm(a_vec - b_vec))


def _min_distance_profiles(metric: DistanceMetric, s1, s2) -> Tuple[np.ndarray, np.ndarray]:
    first, second = as_point_set(s1), as_point_set(s2)
    matrix = metric.pairwise(first, second)
    return matrix.min(axis=1), matrix.min(axis=0)


def set_distance_sum(metric: DistanceMetric, s1, s2) -> float:
    """Average set distance: half the mean nearest distance from each side."""
    forward, backward = _min_distance_profiles(metric, s1, s2)
    return float(0.5 * forward.mean() + 0.5 * backward.mean())


def set_distance_max(metric: DistanceMetric, s1, s2) -> float:
    """Maximum set distance: half the worst nearest distance from each side."""
    forward, backward = _min_distance_profiles(metric, s1, s2)
    return float(0.5 * forward.max() + 0.5 * backward.max())


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - cos(angle) between two non-zero vectors, in [0, 2]."""
    norms = np.linalg.norm(u) * np.linalg.norm(v)
    if norms == 0:
        raise ValueError("Cosine distance is undefined for zero-length vectors")
    cosine = float(np.dot(u, v) / norms)
    return 1.0 - min(1.0, max(-1.0, cosine))
