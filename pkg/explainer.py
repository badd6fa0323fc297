#!/usr/bin/env python3
"""
Counterfactual explainers: the exhaustive explainer over finite grids and the
four-step approximation pipeline (order, distance filter, diversity filter,
boundary bisection).
"""

import logging
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from classifiers import BinarySearchStats, Classifier, CountingClassifier, GridClassifier
from config import Config
from data_processor import Dataset
from geometry import EUCLIDEAN, ArrayLike, DimensionMismatchError, DistanceMetric, as_vector, cosine_distance

logger = logging.getLogger(__name__)

STATUS_OK = 'ok'
STATUS_NO_COUNTERFACTUAL = 'no_counterfactual'
DIRECTION_TOL = 1e-12


class PreconditionError(ValueError):
    """Raised when an operation is called with inputs it is not defined for."""


class ExplanationStepError(RuntimeError):
    """Wraps a failure inside the pipeline with the name of the step that failed."""

    def __init__(self, step: str, cause: Exception):
        super().__init__(f"Step '{step}' failed: {cause}")
        self.step = step
        self.cause = cause


class Step2Mode(str, Enum):
    NUMBER = 'number'
    DISTANCE = 'distance'


class Step3Mode(str, Enum):
    ANGLE = 'angle'
    DISTANCE = 'distance'


class CandidateSource(str, Enum):
    PREDICTION = 'prediction'
    LABEL = 'label'


@dataclass(frozen=True)
class ExplainerConfig:
    """Pipeline knobs.

    ``alpha`` is the step-2 cutoff: a candidate count in number mode, a relative
    distance tolerance in distance mode. ``None`` picks the number-mode default
    for the dataset size. ``eps`` is the exhaustive-explainer tolerance used for
    safety margins; it plays no part in step 2.
    """

    metric: DistanceMetric = EUCLIDEAN
    step2: Step2Mode = Step2Mode.NUMBER
    alpha: Optional[float] = None
    step3: Step3Mode = Step3Mode.ANGLE
    beta: float = Config.BETA
    gamma: float = Config.GAMMA
    eps: float = 0.0
    max_counterfactuals: int = Config.MAX_COUNTERFACTUALS
    minimise: bool = True
    candidate_source: CandidateSource = CandidateSource.PREDICTION
    n_jobs: int = Config.N_JOBS

    def __post_init__(self):
        object.__setattr__(self, 'step2', Step2Mode(self.step2))
        object.__setattr__(self, 'step3', Step3Mode(self.step3))
        object.__setattr__(self, 'candidate_source', CandidateSource(self.candidate_source))
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.eps >= 0:
            raise ValueError(f"eps must be non-negative, got {self.eps}")
        if self.max_counterfactuals < 1:
            raise ValueError(f"max_counterfactuals must be at least 1, got {self.max_counterfactuals}")
        if self.alpha is not None:
            if self.step2 is Step2Mode.NUMBER and (
                    not math.isfinite(self.alpha) or self.alpha < 1 or float(self.alpha) != int(self.alpha)):
                raise ValueError(f"Number-based alpha must be a positive integer, got {self.alpha}")
            if self.step2 is Step2Mode.DISTANCE and not self.alpha >= 0:
                raise ValueError(f"Distance-based alpha must be non-negative, got {self.alpha}")
        upper = 2.0 if self.step3 is Step3Mode.ANGLE else 1.0
        if not 0 <= self.beta <= upper:
            raise ValueError(f"beta must lie in [0, {upper}] for {self.step3.value} filtering, got {self.beta}")

    def resolved_alpha(self, n_rows: int) -> float:
        if self.alpha is not None:
            return self.alpha
        if self.step2 is Step2Mode.NUMBER:
            return Config.default_alpha(n_rows)
        return 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'metric': self.metric.kind.value,
            'weights': list(self.metric.weights) if self.metric.weights else None,
            'step2': self.step2.value,
            'alpha': self.alpha,
            'step3': self.step3.value,
            'beta': self.beta,
            'gamma': self.gamma,
            'eps': self.eps,
            'max_counterfactuals': self.max_counterfactuals,
            'minimise': self.minimise,
            'candidate_source': self.candidate_source.value,
        }


def singleton_nearest_config(config: ExplainerConfig) -> ExplainerConfig:
    """Baseline that returns only the bisection-minimised nearest candidate."""
    return replace(config, max_counterfactuals=1, step3=Step3Mode.ANGLE, beta=0.0, minimise=True)


@dataclass(frozen=True)
class Candidate:
    point: np.ndarray
    distance: float
    index: int


@dataclass
class Counterfactual:
    point: np.ndarray
    distance: float
    source_index: int = -1
    safety_margin: Optional[float] = None
    stats: Optional[BinarySearchStats] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'point': [float(v) for v in self.point],
            'distance': self.distance,
            'source_index': self.source_index,
            'safety_margin': self.safety_margin,
            'binary_search': self.stats.to_dict() if self.stats else None,
        }


@dataclass
class CounterfactualSet:
    reference: np.ndarray
    reference_label: int
    items: List[Counterfactual] = field(default_factory=list)
    status: str = STATUS_OK
    trace: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)

    @property
    def points(self) -> np.ndarray:
        if not self.items:
            return np.empty((0, self.reference.size))
        return np.vstack([item.point for item in self.items])

    @property
    def distances(self) -> List[float]:
        return [item.distance for item in self.items]

    def to_dict(self, include_timings: bool = False) -> Dict[str, Any]:
        trace = {k: v for k, v in self.trace.items() if include_timings or k != 'seconds'}
        return {
            'reference': [float(v) for v in self.reference],
            'reference_label': self.reference_label,
            'status': self.status,
            'counterfactuals': [item.to_dict() for item in self.items],
            'trace': trace,
            'warnings': list(self.warnings),
        }


def safety_margin(x: ArrayLike, c: ArrayLike, eps: float, cfd_value: float,
                  metric: DistanceMetric = EUCLIDEAN) -> float:
    """delta = cfd(x) + eps - d(x, c); negative when c is not eps-approximate."""
    if not math.isfinite(cfd_value):
        raise PreconditionError("Safety margins need a finite counterfactual distance")
    delta = cfd_value + eps - float(metric.norm(as_vector(c) - as_vector(x)))
    if delta < 0:
        logger.warning(f"Negative safety margin {delta:.6g}: counterfactual lies outside the eps-approximate set")
    return delta


# ─── Exhaustive explainer ────────────────────────────────────

def exhaustive_membership(classifier: GridClassifier, metric: DistanceMetric,
                          eps: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All-pairs view of the exhaustive explainer on a grid.

    Returns the distance matrix, the cfd of every grid point (inf for a
    single-class grid) and the boolean matrix whose row ``i`` marks the
    eps-approximate counterfactuals of grid point ``i``.
    """
    points = classifier.points
    labels = classifier.flat_labels
    distances = metric.pairwise(points, points)
    opposite = labels[:, None] != labels[None, :]
    masked = np.where(opposite, distances, np.inf)
    cfd = masked.min(axis=1)
    members = opposite & (distances <= cfd[:, None] + eps + Config.MEMBERSHIP_TOL)
    return distances, cfd, members


def exhaustive_explain(classifier: GridClassifier, metric: DistanceMetric, x: ArrayLike,
                       eps: float) -> CounterfactualSet:
    """Every grid point of the other class within cfd(x) + eps of x, nearest first."""
    if eps < 0:
        raise PreconditionError(f"eps must be non-negative, got {eps}")
    index = classifier.flat_index(x)
    points = classifier.points
    labels = classifier.flat_labels
    reference = points[index]
    result = CounterfactualSet(reference=reference.copy(), reference_label=int(labels[index]))

    opposite = np.flatnonzero(labels != labels[index])
    if opposite.size == 0:
        result.status = STATUS_NO_COUNTERFACTUAL
        result.warnings.append('no counterfactual exists: the grid holds a single class')
        return result

    distances = metric.to_point(points[opposite], reference)
    cfd = float(distances.min())
    keep = distances <= cfd + eps + Config.MEMBERSHIP_TOL
    order = np.argsort(distances[keep], kind='stable')
    for i in order:
        d = float(distances[keep][i])
        result.items.append(Counterfactual(
            point=points[opposite[keep][i]].copy(),
            distance=d,
            source_index=int(opposite[keep][i]),
            safety_margin=cfd + eps - d,
        ))
    result.trace = {'cfd': cfd, 'eps': eps, 'members': len(result.items)}
    return result


# ─── Approximation pipeline ──────────────────────────────────

def order_candidates(dataset: Dataset, classifier: Classifier, metric: DistanceMetric, x: ArrayLike,
                     source: CandidateSource = CandidateSource.PREDICTION) -> List[Candidate]:
    """Step 1: dataset points of the other class, nearest first, ties by dataset index."""
    reference = as_vector(x)
    if len(dataset) == 0:
        raise PreconditionError("Dataset is empty")
    if dataset.n_features != reference.size:
        raise DimensionMismatchError(f"Dataset has {dataset.n_features} features, input has {reference.size}")

    label = classifier.classify(reference)
    if CandidateSource(source) is CandidateSource.PREDICTION:
        other = classifier.predict(dataset.features) != label
    else:
        other = dataset.labels != label
    indices = np.flatnonzero(other)
    if indices.size == 0:
        logger.warning("No dataset point belongs to the counterfactual class")
        return []

    distances = metric.to_point(dataset.features[indices], reference)
    order = np.argsort(distances, kind='stable')
    return [Candidate(dataset.features[indices[i]], float(distances[i]), int(indices[i])) for i in order]


def distance_filter(candidates: List[Candidate], mode: Step2Mode, alpha: float) -> List[Candidate]:
    """Step 2: keep the ``alpha`` closest, or everything within (1 + alpha) * m."""
    if not candidates:
        return []
    if Step2Mode(mode) is Step2Mode.NUMBER:
        return candidates[:int(alpha)]
    threshold = (1.0 + alpha) * candidates[0].distance
    return [c for c in candidates if c.distance <= threshold]


def diversity_filter(candidates: List[Candidate], x: ArrayLike, mode: Step3Mode, beta: float,
                     metric: DistanceMetric, m: float, notes: Optional[List[str]] = None) -> List[Candidate]:
    """Step 3: greedy pass keeping candidates that differ enough from every kept one.

    Angle mode compares directions from x by cosine distance (>= beta);
    distance mode requires metric(c, kept) >= (1 + beta) * m.
    """
    reference = as_vector(x)
    mode = Step3Mode(mode)
    kept: List[Candidate] = []
    directions: List[np.ndarray] = []
    for candidate in candidates:
        if mode is Step3Mode.ANGLE:
            direction = candidate.point - reference
            if not np.any(direction):
                message = f"candidate {candidate.index} coincides with the input; rejected"
                logger.warning(message)
                if notes is not None:
                    notes.append(message)
                continue
            # parallel directions are never both kept, even at beta = 0
            gaps = [cosine_distance(direction, other) for other in directions]
            if all(gap >= beta and gap > DIRECTION_TOL for gap in gaps):
                kept.append(candidate)
                directions.append(direction)
        else:
            threshold = (1.0 + beta) * m
            if all(float(metric.norm(candidate.point - other.point)) >= threshold for other in kept):
                kept.append(candidate)
    return kept


def binary_search_cf(classifier: Classifier, metric: DistanceMetric, x: ArrayLike, c: ArrayLike,
                     gamma: float) -> Tuple[np.ndarray, BinarySearchStats]:
    """Bisect the segment [x, c] until the bracketing pair is within gamma.

    Returns the counterfactual-side end of the final bracket.
    """
    if not gamma > 0:
        raise PreconditionError(f"gamma must be positive, got {gamma}")
    counter = CountingClassifier(classifier)
    inside = as_vector(x).copy()
    outside = as_vector(c).copy()
    label = counter.classify(inside)
    if counter.classify(outside) == label:
        raise PreconditionError("Bisection needs x and c to be classified differently")

    initial = float(metric.norm(outside - inside))
    iterations = 0
    while float(metric.norm(outside - inside)) > gamma:
        middle = (inside + outside) / 2.0
        if counter.classify(middle) == label:
            inside = middle
        else:
            outside = middle
        iterations += 1
    return outside, BinarySearchStats(iterations=iterations, initial_distance=initial, queries=counter.queries)


def _timed(step: str, trace: Dict[str, Any], fn, *args, **kwargs):
    start = time.perf_counter()
    try:
        return fn(*args, **kwargs)
    except ExplanationStepError:
        raise
    except Exception as e:
        logger.error(f"Explanation step '{step}' failed: {e}")
        raise ExplanationStepError(step, e) from e
    finally:
        trace.setdefault('seconds', {})[step] = time.perf_counter() - start


def explain(classifier: Classifier, dataset: Dataset, x: ArrayLike, config: ExplainerConfig = ExplainerConfig(),
            cfd_value: Optional[float] = None) -> CounterfactualSet:
    """Run the four-step pipeline for input ``x``.

    When ``cfd_value`` is given, every counterfactual carries its safety margin
    with respect to ``config.eps``.
    """
    reference = as_vector(x)
    metric = config.metric
    trace: Dict[str, Any] = {}
    label = _timed('classify', trace, classifier.classify, reference)
    result = CounterfactualSet(reference=reference.copy(), reference_label=label, trace=trace)

    s1 = _timed('order', trace, order_candidates, dataset, classifier, metric, reference, config.candidate_source)
    trace['s1'] = len(s1)
    if not s1:
        result.status = STATUS_NO_COUNTERFACTUAL
        result.warnings.append('no counterfactual candidates in the dataset')
        trace.update(s2=0, s3=0, output=0)
        return result

    alpha = config.resolved_alpha(len(dataset))
    s2 = _timed('distance_filter', trace, distance_filter, s1, config.step2, alpha)
    m = s1[0].distance
    s3 = _timed('diversity_filter', trace, diversity_filter, s2, reference, config.step3, config.beta,
                metric, m, result.warnings)
    trace.update(s2=len(s2), s3=len(s3))
    logger.info(f"Candidates per step: S1={len(s1)} S2={len(s2)} S3={len(s3)}")

    if config.candidate_source is CandidateSource.LABEL:
        predicted = classifier.predict(np.vstack([c.point for c in s3])) if s3 else np.array([], int)
        flipped = [c for c, p in zip(s3, predicted) if p != label]
        if len(flipped) < len(s3):
            trace['dropped_invalid'] = len(s3) - len(flipped)
            logger.info(f"Dropped {len(s3) - len(flipped)} label-selected candidates the classifier does not flip")
        s3 = flipped

    if config.minimise:
        searches = _timed('binary_search', trace, Parallel(n_jobs=config.n_jobs),
                          (delayed(binary_search_cf)(classifier, metric, reference, c.point, config.gamma) for c in s3))
        items = [
            Counterfactual(point=point, distance=float(metric.norm(point - reference)),
                           source_index=c.index, stats=stats)
            for c, (point, stats) in zip(s3, searches)
        ]
        # bisection can change the distance order
        items.sort(key=lambda item: item.distance)
    else:
        items = [Counterfactual(point=c.point.copy(), distance=c.distance, source_index=c.index) for c in s3]

    items = items[:config.max_counterfactuals]
    if items:
        predicted = _timed('validity', trace, classifier.predict, np.vstack([item.point for item in items]))
        if np.any(predicted == label):
            raise ExplanationStepError('validity', ValueError("a returned point does not flip the class"))

    if cfd_value is not None:
        for item in items:
            item.safety_margin = safety_margin(reference, item.point, config.eps, cfd_value, metric)

    result.items = items
    trace['output'] = len(items)
    if not items:
        result.status = STATUS_NO_COUNTERFACTUAL
    return result
