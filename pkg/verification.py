#!/usr/bin/env python3
"""
Exhaustive checks of the robustness guarantees of the exhaustive explainer on
finite grids, and the antipodal-input counterexample on a ball classifier.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from classifiers import AnalyticClassifier, GridClassifier
from config import Config
from data_processor import Dataset, synthetic_classifier
from explainer import ExplainerConfig, binary_search_cf, exhaustive_membership, explain
from geometry import EUCLIDEAN, DistanceMetric, set_distance_max, set_distance_sum

logger = logging.getLogger(__name__)

MembershipFn = Callable[[GridClassifier, DistanceMetric, float], Tuple[np.ndarray, np.ndarray, np.ndarray]]

SCENARIOS = ('halfspace', 'ball', 'diamond', 'cube')
MAX_COUNTEREXAMPLES = 5
LEMMA_TOL = 1e-9


class GridTooLargeError(ValueError):
    """Raised when a grid has too many points to enumerate all pairs."""


@dataclass(frozen=True)
class VerificationConfig:
    eps: float = 0.2
    k: float = 1.0
    grid_size: int = 21
    pair_budget: int = 2000
    seed: int = 0
    metric: DistanceMetric = EUCLIDEAN

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError(f"eps must be non-negative, got {self.eps}")
        if not self.k > 0:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.grid_size < 2:
            raise ValueError(f"grid size must be at least 2, got {self.grid_size}")


@dataclass
class CheckResult:
    checked: int = 0
    violations: int = 0
    counterexamples: List[Dict[str, Any]] = field(default_factory=list)

    def add(self, checked: int, bad_pairs: List[Dict[str, Any]], n_bad: int):
        self.checked += checked
        self.violations += n_bad
        room = MAX_COUNTEREXAMPLES - len(self.counterexamples)
        if room > 0:
            self.counterexamples.extend(bad_pairs[:room])


@dataclass
class VerificationReport:
    grid_points: int
    eps: float
    metric: str
    lipschitz: CheckResult
    weak_robustness: CheckResult
    safety: CheckResult
    empirical_k_sum: Optional[float]
    empirical_k_max: Optional[float]
    k: float
    sampled_pairs: int
    max_safety_margin: float

    @property
    def violations(self) -> int:
        return self.lipschitz.violations + self.weak_robustness.violations + self.safety.violations

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> Dict[str, Any]:
        def check(result: CheckResult) -> Dict[str, Any]:
            return {'checked': result.checked, 'violations': result.violations,
                    'counterexamples': result.counterexamples}
        return {
            'schema_version': Config.SCHEMA_VERSION,
            'grid_points': self.grid_points,
            'eps': self.eps,
            'metric': self.metric,
            'violations': self.violations,
            'lipschitz': check(self.lipschitz),
            'weak_robustness': check(self.weak_robustness),
            'safety': check(self.safety),
            'empirical_k': {'sum': self.empirical_k_sum, 'max': self.empirical_k_max,
                            'k': self.k, 'sampled_pairs': self.sampled_pairs,
                            'holds': None if self.empirical_k_max is None else self.empirical_k_max <= self.k},
            'max_safety_margin': self.max_safety_margin,
        }


def scenario_classifier(name: str) -> AnalyticClassifier:
    """Analytic classifiers on [0, 1]^2 used to build verification grids."""
    if name == 'halfspace':
        # label 1 iff x1 >= 0.6
        return AnalyticClassifier('halfspace', normal=(-1.0, 0.0), offset=-0.6, inside_label=1)
    if name in ('ball', 'diamond', 'cube'):
        return synthetic_classifier(name)
    raise ValueError(f"Unknown scenario: {name}; choose from {SCENARIOS}")


def scenario_grid(name: str, size: int) -> GridClassifier:
    return GridClassifier.uniform(scenario_classifier(name), size)


def _pair(points: np.ndarray, a: int, b: int, **extra) -> Dict[str, Any]:
    return {'x1': points[a].tolist(), 'x2': points[b].tolist(), **extra}


def verify_theory(classifier: GridClassifier, config: VerificationConfig = VerificationConfig(),
                  membership: MembershipFn = exhaustive_membership) -> VerificationReport:
    """Enumerate the grid and check the Lipschitz bound on cfd, weak eps/2-robustness and
    safety-margin persistence of the exhaustive explainer; also estimate the (eps, k) constant.

    ``membership`` computes the explainer under test; the default is the exact one.
    """
    n = classifier.size
    if n > Config.MAX_GRID_POINTS:
        side = int(Config.MAX_GRID_POINTS ** (1.0 / classifier.n_features))
        raise GridTooLargeError(
            f"Grid has {n} points; at most {Config.MAX_GRID_POINTS} can be enumerated "
            f"(about {side} points per axis in {classifier.n_features} dimensions)"
        )

    metric, eps = config.metric, config.eps
    points = classifier.points
    labels = classifier.flat_labels
    logger.info(f"Verifying {n} grid points, eps={eps}, metric={metric.kind.value}")

    distances, cfd, members = membership(classifier, metric, eps)
    same = labels[:, None] == labels[None, :]
    # strong set does not depend on ``membership``
    strong = ~same & (distances <= cfd[:, None] + Config.MEMBERSHIP_TOL)

    # cfd(x1) <= d(x1, x2) + cfd(x2) for same-class pairs
    lipschitz = CheckResult()
    bound_ok = cfd[:, None] <= distances + cfd[None, :] + LEMMA_TOL
    bad = same & ~bound_ok
    bad_idx = np.argwhere(bad)
    lipschitz.add(int(same.sum()), [_pair(points, a, b) for a, b in bad_idx[:MAX_COUNTEREXAMPLES]], len(bad_idx))

    weak = CheckResult()
    safety = CheckResult()
    max_margin = 0.0
    for x1 in range(n):
        # strong counterfactuals of x1 stay in E(x2) when d(x1, x2) < eps / 2
        near = np.flatnonzero(same[x1] & (distances[x1] < eps / 2))
        missing = strong[x1][None, :] & ~members[near]
        n_bad = missing.any(axis=1)
        weak.add(len(near), [_pair(points, x1, near[j], counterfactual=points[np.argmax(missing[j])].tolist())
                             for j in np.flatnonzero(n_bad)], int(n_bad.sum()))

        # counterfactuals with margin delta stay in E(x') when d(x, x') < delta / 2
        margins = np.where(members[x1], cfd[x1] + eps - distances[x1], -np.inf)
        positive = margins > 0
        if not positive.any():
            continue
        max_margin = max(max_margin, float(margins[positive].max()))
        near = np.flatnonzero(same[x1] & (distances[x1] < margins[positive].max() / 2))
        required = positive[None, :] & (margins[None, :] > 2 * distances[x1, near][:, None])
        missing = required & ~members[near]
        n_bad = missing.any(axis=1)
        safety.add(int(required.sum()),
                   [_pair(points, x1, near[j], counterfactual=points[np.argmax(missing[j])].tolist())
                    for j in np.flatnonzero(n_bad)], int(n_bad.sum()))

    k_sum, k_max, sampled = _empirical_k(points, same, distances, members, config)
    report = VerificationReport(
        grid_points=n, eps=eps, metric=metric.kind.value,
        lipschitz=lipschitz, weak_robustness=weak, safety=safety,
        empirical_k_sum=k_sum, empirical_k_max=k_max, k=config.k, sampled_pairs=sampled,
        max_safety_margin=max_margin,
    )
    if report.passed:
        logger.info("All robustness checks passed")
    else:
        logger.warning(f"Found {report.violations} violations")
    return report


def _empirical_k(points: np.ndarray, same: np.ndarray, distances: np.ndarray, members: np.ndarray,
                 config: VerificationConfig) -> Tuple[Optional[float], Optional[float], int]:
    """Largest set-distance / input-distance ratio over sampled same-class pairs closer than eps."""
    close = np.argwhere(same & (distances > 0) & (distances < config.eps))
    close = close[close[:, 0] < close[:, 1]]
    if len(close) == 0:
        return None, None, 0
    rng = np.random.default_rng(config.seed)
    if len(close) > config.pair_budget:
        close = close[np.sort(rng.choice(len(close), size=config.pair_budget, replace=False))]
    ratios_sum, ratios_max = [], []
    for a, b in close:
        if not members[a].any() or not members[b].any():
            continue
        s1, s2 = points[members[a]], points[members[b]]
        gap = distances[a, b]
        ratios_sum.append(set_distance_sum(config.metric, s1, s2) / gap)
        ratios_max.append(set_distance_max(config.metric, s1, s2) / gap)
    if not ratios_max:
        return None, None, 0
    return float(max(ratios_sum)), float(max(ratios_max)), len(ratios_max)


# ─── Antipodal counterexample ────────────────────────────────

def nearest_boundary_point(classifier: AnalyticClassifier, x: np.ndarray, gamma: float) -> np.ndarray:
    """Bisect from x along the ray leaving the ball center through x."""
    direction = x - classifier.center
    norm = np.linalg.norm(direction)
    if norm == 0:
        raise ValueError("The ball center has no unique nearest boundary point")
    far = classifier.center + direction / norm * 2 * classifier.radius
    point, _ = binary_search_cf(classifier, classifier.metric, x, far, gamma)
    return point


def antipodal_demo(radius: float = 1.0, gap: float = 0.01, gamma: float = 0.001, n_points: int = 2000,
                   seed: int = 0, config: Optional[ExplainerConfig] = None) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    """Two inputs ``gap`` apart straddling the center of a ball classifier.

    Their nearest-boundary explanations sit on opposite ends of a diameter (set
    distance close to 2 * radius) while the diverse sets computed from a sampled
    dataset stay close to each other. Returns plot-ready points and a summary.
    """
    ball = AnalyticClassifier('ball', center=(0.0, 0.0), radius=radius)
    x = np.array([gap / 2, 0.0])
    x_prime = -x

    singleton = [nearest_boundary_point(ball, p, gamma) for p in (x, x_prime)]

    rng = np.random.default_rng(seed)
    sample = rng.uniform(-2 * radius, 2 * radius, size=(n_points, 2))
    dataset = Dataset(feature_names=['x1', 'x2'], features=sample, labels=ball.predict(sample),
                      provenance=f"antipodal-demo:n={n_points}:seed={seed}")
    config = config or ExplainerConfig(gamma=gamma)
    sets = [explain(ball, dataset, p, config).points for p in (x, x_prime)]

    rows = [{'series': 'input', 'input': name, 'x1': p[0], 'x2': p[1]} for name, p in (('x', x), ('x_prime', x_prime))]
    rows += [{'series': 'singleton', 'input': name, 'x1': p[0], 'x2': p[1]}
             for name, p in zip(('x', 'x_prime'), singleton)]
    for name, s in zip(('x', 'x_prime'), sets):
        rows += [{'series': 'diverse_set', 'input': name, 'x1': p[0], 'x2': p[1]} for p in s]

    metric = EUCLIDEAN
    summary = {
        'schema_version': Config.SCHEMA_VERSION,
        'radius': radius,
        'gap': gap,
        'gamma': gamma,
        'n_points': n_points,
        'seed': seed,
        'singleton_set_distance_sum': set_distance_sum(metric, [singleton[0]], [singleton[1]]),
        'singleton_set_distance_max': set_distance_max(metric, [singleton[0]], [singleton[1]]),
        'diverse_set_sizes': [len(s) for s in sets],
        'diverse_set_distance_sum': set_distance_sum(metric, sets[0], sets[1]) if all(len(s) for s in sets) else None,
        'diverse_set_distance_max': set_distance_max(metric, sets[0], sets[1]) if all(len(s) for s in sets) else None,
    }
    return pd.DataFrame(rows, columns=['series', 'input', 'x1', 'x2']), summary

