#!/usr/bin/env python3
"""
Explanation-quality metrics and the Gaussian-perturbation robustness protocol
"""

import json
import logging
import time
from dataclasses import dataclass, field, replace
from itertools import combinations
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from classifiers import Classifier
from config import Config
from data_processor import Dataset
from explainer import (
    STATUS_OK, CounterfactualSet, ExplainerConfig, ExplanationStepError, PreconditionError, Step3Mode, explain,
    singleton_nearest_config,
)
from geometry import (
    EUCLIDEAN, MANHATTAN, DistanceMetric, as_point_set, as_vector, set_distance_max, set_distance_sum,
)

logger = logging.getLogger(__name__)

ExplainFn = Callable[[np.ndarray], CounterfactualSet]

REPORT_METRICS = (MANHATTAN, EUCLIDEAN)
CSV_COLUMNS = ['method', 'dataset', 'metric', 'mean', 'std']
AGGREGATION_NOTE = 'pooled over all trials of all inputs; population standard deviation'
EXPLAIN_ERRORS = (ExplanationStepError, PreconditionError, ValueError)


def k_distance(metric: DistanceMetric, x, points) -> float:
    """Mean distance of the explanation set from the input."""
    s = as_point_set(points)
    return float(metric.to_point(s, as_vector(x)).mean())


def k_diversity(metric: DistanceMetric, points) -> float:
    """Mean pairwise distance within the set; 0.0 for sets of fewer than two points."""
    s = as_point_set(points)
    if len(s) < 2:
        return 0.0
    return float(np.mean([metric.norm(s[i] - s[j]) for i, j in combinations(range(len(s)), 2)]))


@dataclass(frozen=True)
class Perturbation:
    point: Optional[np.ndarray]
    draws: int

    @property
    def ok(self) -> bool:
        return self.point is not None


def perturb_same_class(classifier: Classifier, x, sigma: float, seed: Union[int, Sequence[int]],
                       max_retries: int = Config.MAX_RETRIES,
                       bounds: Optional[Tuple[float, float]] = (0.0, 1.0)) -> Perturbation:
    """Draw x + N(0, sigma^2 I) (clipped to ``bounds``) until the label matches x."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    reference = as_vector(x)
    label = classifier.classify(reference)
    rng = np.random.default_rng(seed)
    for draw in range(1, max_retries + 1):
        candidate = reference + rng.normal(0.0, sigma, size=reference.size)
        if bounds is not None:
            candidate = np.clip(candidate, *bounds)
        if classifier.classify(candidate) == label:
            return Perturbation(candidate, draw)
    logger.warning(f"No same-class perturbation found after {max_retries} draws")
    return Perturbation(None, max_retries)


def default_methods(classifier: Classifier, dataset: Dataset, config: ExplainerConfig) -> Dict[str, ExplainFn]:
    """Our pipeline and the singleton-nearest baseline."""
    baseline = singleton_nearest_config(config)
    return {
        'robust_set': lambda x: explain(classifier, dataset, x, config),
        'singleton_nearest': lambda x: explain(classifier, dataset, x, baseline),
    }


def _set_metrics(x, s, x2, s2) -> Dict[str, float]:
    row: Dict[str, float] = {}
    for metric in REPORT_METRICS:
        kind = metric.kind.value
        row[f'{kind}_k_distance'] = k_distance(metric, x, s)
        row[f'{kind}_k_distance_perturbed'] = k_distance(metric, x2, s2)
        row[f'{kind}_k_diversity'] = k_diversity(metric, s)
        row[f'{kind}_k_diversity_perturbed'] = k_diversity(metric, s2)
        row[f'{kind}_set_distance_sum'] = set_distance_sum(metric, s, s2)
        row[f'{kind}_set_distance_max'] = set_distance_max(metric, s, s2)
    return row


def _bisection_metrics(explanation: CounterfactualSet) -> Dict[str, float]:
    stats = [item.stats for item in explanation.items if item.stats is not None]
    if not stats:
        return {}
    return {
        'bisection_iterations': float(np.mean([s.iterations for s in stats])),
        'bisection_queries': float(np.mean([s.queries for s in stats])),
    }


def _run_input(input_id: int, x: np.ndarray, classifier: Classifier, methods: Mapping[str, ExplainFn],
               sigma: float, repetitions: int, seed: int, max_retries: int,
               bounds: Optional[Tuple[float, float]]) -> Tuple[List[Dict], List[Dict], Dict[str, Dict]]:
    records, failures, explanations = [], [], {}
    for method, fn in methods.items():
        try:
            original = fn(x)
        except EXPLAIN_ERRORS as e:
            logger.warning(f"{method} failed on input {input_id}: {e}")
            failures.append({'method': method, 'input_id': input_id, 'perturbation_id': None, 'reason': str(e)})
            continue
        explanations[method] = original.to_dict(include_timings=True)
        if original.status != STATUS_OK or not len(original):
            failures.append({'method': method, 'input_id': input_id, 'perturbation_id': None,
                             'reason': 'no explanation for input'})
            continue
        for rep in range(repetitions):
            perturbation = perturb_same_class(classifier, x, sigma, [seed, input_id, rep], max_retries, bounds)
            if not perturbation.ok:
                failures.append({'method': method, 'input_id': input_id, 'perturbation_id': rep,
                                 'reason': 'perturbation retries exhausted'})
                continue
            start = time.perf_counter()
            try:
                perturbed = fn(perturbation.point)
            except EXPLAIN_ERRORS as e:
                logger.warning(f"{method} failed on input {input_id}, repetition {rep}: {e}")
                failures.append({'method': method, 'input_id': input_id, 'perturbation_id': rep,
                                 'reason': str(e)})
                continue
            wall_time = time.perf_counter() - start
            if perturbed.status != STATUS_OK or not len(perturbed):
                failures.append({'method': method, 'input_id': input_id, 'perturbation_id': rep,
                                 'reason': 'no explanation for perturbed input'})
                continue
            record = {
                'method': method,
                'input_id': input_id,
                'perturbation_id': rep,
                'draws': perturbation.draws,
                'n_counterfactuals': len(original),
                'n_counterfactuals_perturbed': len(perturbed),
                'degenerate_diversity': len(original) < 2 or len(perturbed) < 2,
                **_set_metrics(x, original.points, perturbation.point, perturbed.points),
                **_bisection_metrics(perturbed),
                'wall_time': wall_time,
            }
            records.append(record)
    return records, failures, explanations


@dataclass
class RobustnessReport:
    dataset: str
    sigma: float
    repetitions: int
    seed: int
    config: Dict[str, Any]
    records: List[Dict[str, Any]] = field(default_factory=list)
    failures: List[Dict[str, Any]] = field(default_factory=list)
    explanations: List[Dict[str, Any]] = field(default_factory=list)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.records)

    def aggregates(self, include_timings: bool = False) -> pd.DataFrame:
        """Mean and population std per method and metric, in a fixed row order."""
        df = self.frame()
        if df.empty:
            return pd.DataFrame(columns=CSV_COLUMNS)
        skip = {'method', 'input_id', 'perturbation_id', 'degenerate_diversity'}
        if not include_timings:
            skip.add('wall_time')
        metric_columns = [c for c in df.columns if c not in skip]
        rows = []
        for method in sorted(df['method'].unique()):
            group = df[df['method'] == method]
            for metric in metric_columns:
                values = group[metric].dropna().to_numpy(dtype=float)
                if values.size == 0:
                    continue
                rows.append({'method': method, 'dataset': self.dataset, 'metric': metric,
                             'mean': float(values.mean()), 'std': float(values.std())})
        return pd.DataFrame(rows, columns=CSV_COLUMNS)

    def per_input_means(self, metric: str) -> pd.DataFrame:
        """One row per input, one column per method: the mean of ``metric`` over repetitions."""
        df = self.frame()
        if df.empty:
            return pd.DataFrame()
        return df.pivot_table(index='input_id', columns='method', values=metric, aggfunc='mean')

    def win_rate(self, method: str, baseline: str, metric: str = 'l2_set_distance_max') -> float:
        """Fraction of inputs where ``method`` has a strictly smaller mean ``metric`` than ``baseline``."""
        table = self.per_input_means(metric)
        if table.empty or method not in table or baseline not in table:
            return float('nan')
        both = table[[method, baseline]].dropna()
        if both.empty:
            return float('nan')
        return float((both[method] < both[baseline]).mean())

    def to_dict(self, include_timings: bool = False) -> Dict[str, Any]:
        records = self.records if include_timings else [
            {k: v for k, v in r.items() if k != 'wall_time'} for r in self.records
        ]
        return {
            'schema_version': Config.SCHEMA_VERSION,
            'dataset': self.dataset,
            'sigma': self.sigma,
            'repetitions': self.repetitions,
            'seed': self.seed,
            'config': self.config,
            'aggregation': AGGREGATION_NOTE,
            'failures': self.failures,
            'failure_count': len(self.failures),
            'records': records,
            'aggregates': self.aggregates(include_timings).to_dict(orient='records'),
            'explanations': self.explanations if include_timings else [
                {**e, 'explanation': {**e['explanation'], 'trace': {
                    k: v for k, v in e['explanation']['trace'].items() if k != 'seconds'}}}
                for e in self.explanations
            ],
        }

    def write_json(self, path: Union[str, Path], include_timings: bool = False) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(include_timings), f, indent=2, sort_keys=True)
        logger.info(f"Report written to {path}")
        return path

    def write_csv(self, path: Union[str, Path], include_timings: bool = False) -> Path:
        """Aggregate table with columns method, dataset, metric, mean, std, schema_version."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        table = self.aggregates(include_timings)
        table['schema_version'] = Config.SCHEMA_VERSION
        table.to_csv(path, index=False, float_format='%.10g', lineterminator='\n')
        logger.info(f"Aggregate table written to {path}")
        return path


def robustness_protocol(classifier: Classifier, dataset: Dataset, inputs: np.ndarray,
                        config: ExplainerConfig = ExplainerConfig(), sigma: float = Config.SIGMA,
                        repetitions: int = Config.REPETITIONS, seed: int = 0,
                        methods: Optional[Mapping[str, ExplainFn]] = None, dataset_name: str = '',
                        max_retries: int = Config.MAX_RETRIES,
                        bounds: Optional[Tuple[float, float]] = (0.0, 1.0),
                        n_jobs: int = Config.N_JOBS) -> RobustnessReport:
    """Explain each input and same-class perturbations of it; record quality and robustness metrics.

    Every (input, repetition) draws from its own stream seeded by
    (seed, input id, repetition), so results do not depend on ``n_jobs``.
    """
    if repetitions < 0:
        raise ValueError(f"repetitions must be non-negative, got {repetitions}")
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    methods = methods if methods is not None else default_methods(classifier, dataset, config)
    logger.info(f"Robustness protocol: {len(inputs)} inputs x {repetitions} repetitions, "
                f"methods {list(methods)}, sigma={sigma}")

    # method closures are not picklable; parallelise with threads
    results = Parallel(n_jobs=n_jobs, prefer='threads')(
        delayed(_run_input)(i, inputs[i], classifier, methods, sigma, repetitions, seed, max_retries, bounds)
        for i in range(len(inputs))
    )
    report = RobustnessReport(dataset=dataset_name or dataset.provenance, sigma=sigma,
                              repetitions=repetitions, seed=seed, config=config.to_dict())
    for input_id, (records, failures, explanations) in enumerate(results):
        report.records.extend(records)
        report.failures.extend(failures)
        for method, explanation in explanations.items():
            report.explanations.append({'input_id': input_id, 'method': method, 'explanation': explanation})
    if report.failures:
        logger.warning(f"{len(report.failures)} trials failed and are excluded from aggregates")
    return report


def hyperparameter_sweep(classifier: Classifier, dataset: Dataset, inputs: np.ndarray,
                         base_config: ExplainerConfig = ExplainerConfig(),
                         betas: Sequence[float] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5),
                         gammas: Sequence[float] = (0.1, 0.01, 0.001),
                         modes: Sequence[Step3Mode] = (Step3Mode.ANGLE, Step3Mode.DISTANCE),
                         sigma: float = Config.SIGMA, repetitions: int = Config.REPETITIONS,
                         seed: int = 0, dataset_name: str = '') -> pd.DataFrame:
    """Robustness protocol over a grid of step-3 modes, beta and gamma values."""
    tables = []
    for mode in modes:
        for beta in betas:
            for gamma in gammas:
                config = replace(base_config, step3=Step3Mode(mode), beta=beta, gamma=gamma)
                report = robustness_protocol(
                    classifier, dataset, inputs, config, sigma, repetitions, seed,
                    methods={'robust_set': lambda x, c=config: explain(classifier, dataset, x, c)},
                    dataset_name=dataset_name,
                )
                table = report.aggregates()
                table.insert(1, 'step3', Step3Mode(mode).value)
                table.insert(2, 'beta', beta)
                table.insert(3, 'gamma', gamma)
                tables.append(table)
                logger.info(f"Sweep point step3={Step3Mode(mode).value} beta={beta} gamma={gamma} done")
    if not tables:
        return pd.DataFrame(columns=['method', 'step3', 'beta', 'gamma'] + CSV_COLUMNS[1:])
    return pd.concat(tables, ignore_index=True)
