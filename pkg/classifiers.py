#!/usr/bin/env python3
"""
Binary classifiers queried by the explainer: MLP inference from stored weights,
analytic geometric classifiers and finite grid classifiers.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from geometry import (
    CHEBYSHEV, EUCLIDEAN, MANHATTAN,
    ArrayLike, DimensionMismatchError, DistanceMetric, as_vector,
)

logger = logging.getLogger(__name__)

LABELS = (0, 1)


class Classifier:
    """Base class for binary decision functions over feature vectors."""

    n_features: int

    def predict(self, points: np.ndarray) -> np.ndarray:
        """Labels for every row of ``points``."""
        raise NotImplementedError

    def _check_points(self, points: ArrayLike) -> np.ndarray:
        array = np.asarray(points, dtype=float)
        if array.ndim == 1:
            array = array.reshape(1, -1)
        if array.shape[1] != self.n_features:
            raise DimensionMismatchError(
                f"Classifier expects {self.n_features} features, got {array.shape[1]}"
            )
        return array

    def classify(self, x: ArrayLike) -> int:
        """Label of a single feature vector."""
        vector = as_vector(x)
        return int(self.predict(self._check_points(vector))[0])


def classify(classifier: Classifier, x: ArrayLike) -> int:
    return classifier.classify(x)


class CountingClassifier(Classifier):
    """Wraps a classifier and counts how many points it was asked to label."""

    def __init__(self, inner: Classifier):
        self.inner = inner
        self.n_features = inner.n_features
        self.queries = 0

    def predict(self, points: np.ndarray) -> np.ndarray:
        points = self._check_points(points)
        self.queries += len(points)
        return self.inner.predict(points)


@dataclass(frozen=True)
class BinarySearchStats:
    """Bookkeeping of one bisection run: loop iterations, start distance, classifier calls."""

    iterations: int
    initial_distance: float
    queries: int

    @staticmethod
    def iteration_bound(initial_distance: float, gamma: float) -> int:
        if initial_distance <= gamma:
            return 0
        return math.ceil(math.log2(initial_distance / gamma)) + 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            'iterations': self.iterations,
            'initial_distance': self.initial_distance,
            'queries': self.queries,
        }


# ─── MLP inference ───────────────────────────────────────────

_ACTIVATIONS = {
    'relu': lambda z: np.maximum(z, 0.0),
    'identity': lambda z: z,
}


class MlpModel(Classifier):
    """Feed-forward network with rectifier hidden layers.

    The output layer has either one logit (label 1 iff logit > 0, i.e. the
    sigmoid exceeds 0.5) or two logits (argmax). Ties go to label 0.
    """

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray],
                 hidden_activation: str = 'relu', label_names: Sequence[str] = ('0', '1')):
        if len(weights) != len(biases) or not weights:
            raise ValueError("MLP needs one bias vector per weight matrix")
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float).reshape(-1) for b in biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or w.shape[1] != b.size:
                raise ValueError(f"Layer {i}: weight shape {w.shape} does not match bias size {b.size}")
            if i > 0 and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(
                    f"Layer {i}: expects {w.shape[0]} inputs but previous layer has "
                    f"{self.weights[i - 1].shape[1]} outputs"
                )
        if self.weights[-1].shape[1] not in (1, 2):
            raise ValueError("Binary MLP output layer must have 1 or 2 units")
        if hidden_activation not in _ACTIVATIONS:
            raise ValueError(f"Unsupported activation: {hidden_activation}")
        self.hidden_activation = hidden_activation
        self.label_names = list(label_names)
        self.training_metrics: Dict[str, Any] = {}
        self.n_features = self.weights[0].shape[0]

    @property
    def architecture(self) -> List[int]:
        return [self.n_features] + [w.shape[1] for w in self.weights]

    def logits(self, points: np.ndarray) -> np.ndarray:
        activation = _ACTIVATIONS[self.hidden_activation]
        hidden = self._check_points(points)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            hidden = activation(hidden @ w + b)
        return hidden @ self.weights[-1] + self.biases[-1]

    def predict(self, points: np.ndarray) -> np.ndarray:
        out = self.logits(points)
        if out.shape[1] == 1:
            return (out[:, 0] > 0).astype(int)
        return (out[:, 1] > out[:, 0]).astype(int)


# ─── Analytic classifiers ────────────────────────────────────

BALL_METRICS = {
    'ball': EUCLIDEAN,
    'diamond': MANHATTAN,
    'cube': CHEBYSHEV,
}


class AnalyticClassifier(Classifier):
    """Ball, diamond, cube or halfspace classifier with a closed-form boundary.

    Points with ``distance(center, x) <= radius`` (or ``normal . x <= offset``
    for a halfspace) receive ``inside_label``; the boundary belongs to the inside.
    """

    def __init__(self, kind: str, center: Optional[ArrayLike] = None, radius: float = 1.0,
                 normal: Optional[ArrayLike] = None, offset: float = 0.0,
                 inside_label: int = 0, metric: Optional[DistanceMetric] = None):
        if inside_label not in LABELS:
            raise ValueError(f"Labels must be 0 or 1, got {inside_label}")
        self.kind = kind
        self.inside_label = int(inside_label)
        self.outside_label = 1 - self.inside_label
        if kind in BALL_METRICS:
            if center is None:
                raise ValueError(f"A {kind} classifier needs a center")
            if not radius > 0:
                raise ValueError(f"Radius must be positive, got {radius}")
            self.center = as_vector(center)
            self.radius = float(radius)
            self.metric = BALL_METRICS[kind]
            self.n_features = self.center.size
        elif kind == 'halfspace':
            if normal is None:
                raise ValueError("A halfspace classifier needs a normal vector")
            self.normal = as_vector(normal)
            if not np.any(self.normal):
                raise ValueError("Halfspace normal must be non-zero")
            self.offset = float(offset)
            self.metric = metric or EUCLIDEAN
            if self.metric.weights is not None and len(self.metric.weights) != self.normal.size:
                raise DimensionMismatchError(
                    f"Metric has {len(self.metric.weights)} weights but the normal has {self.normal.size} entries"
                )
            self.n_features = self.normal.size
        else:
            raise ValueError(f"Unknown analytic classifier kind: {kind}")

    def is_inside(self, points: np.ndarray) -> np.ndarray:
        points = self._check_points(points)
        if self.kind == 'halfspace':
            return points @ self.normal <= self.offset
        return self.metric.to_point(points, self.center) <= self.radius

    def predict(self, points: np.ndarray) -> np.ndarray:
        return np.where(self.is_inside(points), self.inside_label, self.outside_label)

    def describe(self) -> Dict[str, Any]:
        info = {'kind': self.kind, 'inside_label': self.inside_label}
        if self.kind == 'halfspace':
            info.update(normal=self.normal.tolist(), offset=self.offset, metric=self.metric.kind.value)
        else:
            info.update(center=self.center.tolist(), radius=self.radius)
        return info


def cfd_analytic(classifier: AnalyticClassifier, x: ArrayLike) -> float:
    """Exact counterfactual distance under the classifier's native metric."""
    vector = as_vector(x)
    if vector.size != classifier.n_features:
        raise DimensionMismatchError(
            f"Classifier expects {classifier.n_features} features, got {vector.size}"
        )
    if classifier.kind == 'halfspace':
        gap = abs(float(classifier.normal @ vector) - classifier.offset)
        normal = classifier.normal
        if classifier.metric.weights is not None:
            weights = np.asarray(classifier.metric.weights)
            # zero-weight features cross the boundary at no cost
            if np.any(normal[weights == 0] != 0):
                return 0.0
            normal = normal[weights > 0] / weights[weights > 0]
        dual = DistanceMetric(classifier.metric.dual)
        return gap / float(dual.norm(normal))
    return abs(classifier.radius - float(classifier.metric.to_point(vector, classifier.center)))


# ─── Grid classifiers ────────────────────────────────────────

class GridClassifier(Classifier):
    """Labels on the finite Cartesian product of per-axis grids.

    Off-grid points take the label of the nearest grid point along every axis.
    """

    def __init__(self, axes: Sequence[ArrayLike], labels: np.ndarray):
        self.axes: Tuple[np.ndarray, ...] = tuple(np.asarray(a, dtype=float) for a in axes)
        if not self.axes:
            raise ValueError("Grid needs at least one axis")
        for axis in self.axes:
            if axis.ndim != 1 or axis.size == 0 or np.any(np.diff(axis) <= 0):
                raise ValueError("Every grid axis must be a non-empty strictly increasing sequence")
        shape = tuple(axis.size for axis in self.axes)
        labels = np.asarray(labels, dtype=int).reshape(shape)
        if not np.isin(labels, LABELS).all():
            raise ValueError("Grid labels must be 0 or 1")
        self.labels = labels
        self.n_features = len(self.axes)
        self._points: Optional[np.ndarray] = None

    @classmethod
    def from_classifier(cls, classifier: Classifier, axes: Sequence[ArrayLike]) -> 'GridClassifier':
        """Sample another classifier on the grid spanned by ``axes``."""
        axes = [np.asarray(a, dtype=float) for a in axes]
        mesh = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, len(axes))
        labels = classifier.predict(mesh).reshape(tuple(a.size for a in axes))
        logger.info(f"Sampled {mesh.shape[0]} grid points from {type(classifier).__name__}")
        return cls(axes, labels)

    @classmethod
    def uniform(cls, classifier: Classifier, size: int, low: float = 0.0, high: float = 1.0) -> 'GridClassifier':
        axis = np.linspace(low, high, size)
        return cls.from_classifier(classifier, [axis] * classifier.n_features)

    @property
    def size(self) -> int:
        return int(self.labels.size)

    @property
    def points(self) -> np.ndarray:
        """All grid points, one row per point, in row-major cell order."""
        if self._points is None:
            mesh = np.meshgrid(*self.axes, indexing='ij')
            self._points = np.stack(mesh, axis=-1).reshape(-1, self.n_features)
        return self._points

    @property
    def flat_labels(self) -> np.ndarray:
        return self.labels.reshape(-1)

    def _nearest_indices(self, points: np.ndarray) -> Tuple[np.ndarray, ...]:
        indices = []
        for dim, axis in enumerate(self.axes):
            values = points[:, dim]
            right = np.clip(np.searchsorted(axis, values), 1, axis.size - 1) if axis.size > 1 else np.zeros(len(values), int)
            left = np.maximum(right - 1, 0)
            pick_left = np.abs(values - axis[left]) <= np.abs(values - axis[right])
            indices.append(np.where(pick_left, left, right))
        return tuple(indices)

    def predict(self, points: np.ndarray) -> np.ndarray:
        points = self._check_points(points)
        return self.labels[self._nearest_indices(points)]

    def flat_index(self, x: ArrayLike, atol: float = 1e-9) -> int:
        """Row of ``points`` equal to ``x``; raises if ``x`` is not a grid point."""
        vector = self._check_points(as_vector(x))
        cell = self._nearest_indices(vector)
        for dim, axis in enumerate(self.axes):
            if abs(axis[cell[dim][0]] - vector[0, dim]) > atol:
                raise ValueError(f"Point {vector[0].tolist()} is not in the grid domain")
        return int(np.ravel_multi_index(tuple(c[0] for c in cell), self.labels.shape))


def cfd_bruteforce(classifier: GridClassifier, metric: DistanceMetric, x: ArrayLike) -> float:
    """Minimum distance from a grid point to any differently labelled grid point (inf if none)."""
    index = classifier.flat_index(x)
    labels = classifier.flat_labels
    others = classifier.points[labels != labels[index]]
    if len(others) == 0:
        return math.inf
    return float(metric.to_point(others, classifier.points[index]).min())
