"""Tests for explanation metrics, perturbations and the robustness protocol."""

import json

import numpy as np
import pandas as pd
import pytest

from classifiers import AnalyticClassifier, Classifier, cfd_bruteforce
from data_processor import synthetic_classifier, synthetic_dataset
from explainer import CounterfactualSet, Counterfactual, ExplainerConfig, Step3Mode, exhaustive_explain, explain
from geometry import CHEBYSHEV, EUCLIDEAN, MANHATTAN
from metrics import (
    CSV_COLUMNS, hyperparameter_sweep, k_distance, k_diversity, perturb_same_class, robustness_protocol,
)
from verification import SCENARIOS, scenario_grid


def ball_setup(n=300, seed=0):
    dataset = synthetic_dataset('ball', n, seed)
    return synthetic_classifier('ball'), dataset


class BackendOutage(Classifier):
    """Labels like the synthetic ball but fails whenever asked about ``POISONED`` alone."""

    n_features = 2
    POISONED = np.array([0.95, 0.5])

    def predict(self, points):
        points = self._check_points(points)
        if len(points) == 1 and np.allclose(points[0], self.POISONED):
            raise RuntimeError('model backend failure')
        return synthetic_classifier('ball').predict(points)


class TestKDistance:
    def test_mean_distance(self):
        assert k_distance(EUCLIDEAN, [0, 0], [(1, 0), (0, 2)]) == pytest.approx(1.5)

    def test_input_itself(self):
        assert k_distance(EUCLIDEAN, [0, 0], [(0, 0)]) == 0.0

    def test_singleton(self):
        assert k_distance(EUCLIDEAN, [0, 0], [(3, 4)]) == pytest.approx(5.0)

    @pytest.mark.parametrize('scenario', SCENARIOS)
    @pytest.mark.parametrize('metric', [MANHATTAN, EUCLIDEAN, CHEBYSHEV])
    def test_never_below_cfd_on_grids(self, scenario, metric):
        grid = scenario_grid(scenario, 21)
        points, labels = grid.points, grid.flat_labels
        rng = np.random.default_rng(7)
        for index in rng.choice(grid.size, size=40, replace=False):
            x = points[index]
            cfd = cfd_bruteforce(grid, metric, x)
            for eps in (0.0, 0.2):
                explanation = exhaustive_explain(grid, metric, x, eps)
                assert k_distance(metric, x, explanation.points) >= cfd - 1e-12
            opposite = points[labels != labels[index]]
            subset = opposite[rng.choice(len(opposite), size=min(5, len(opposite)), replace=False)]
            assert k_distance(metric, x, subset) >= cfd - 1e-12


class TestKDiversity:
    def test_single_pair(self):
        assert k_diversity(EUCLIDEAN, [(0, 0), (3, 4)]) == pytest.approx(5.0)

    def test_three_points_manhattan(self):
        assert k_diversity(MANHATTAN, [(0, 0), (1, 0), (0, 1)]) == pytest.approx(4 / 3)

    def test_duplicates(self):
        assert k_diversity(EUCLIDEAN, [(1, 1), (1, 1)]) == 0.0

    def test_degenerate(self):
        assert k_diversity(EUCLIDEAN, [(1, 1)]) == 0.0

    def test_permutation_invariant(self):
        points = np.random.default_rng(2).normal(size=(6, 3))
        assert k_diversity(EUCLIDEAN, points[::-1]) == pytest.approx(k_diversity(EUCLIDEAN, points))


class TestPerturbation:
    def test_same_class(self):
        classifier = synthetic_classifier('ball')
        x = np.array([0.5, 0.5])
        for seed in range(50):
            result = perturb_same_class(classifier, x, 0.05, seed)
            assert result.ok
            assert classifier.classify(result.point) == classifier.classify(x)

    def test_first_draw_usually_accepted(self):
        ball = AnalyticClassifier('ball', center=(0.5, 0.5), radius=0.3)
        x = np.array([0.5, 0.5])
        draws = [perturb_same_class(ball, x, 0.05, seed).draws for seed in range(1000)]
        assert np.mean(np.array(draws) == 1) >= 0.95

    def test_near_boundary_retries(self):
        ball = AnalyticClassifier('ball', center=(0.5, 0.5), radius=0.3)
        x = np.array([0.5 + 0.3 - 0.005, 0.5])
        results = [perturb_same_class(ball, x, 0.05, seed) for seed in range(200)]
        assert all(r.ok and ball.classify(r.point) == 0 for r in results)
        assert max(r.draws for r in results) > 1

    def test_clipped_to_unit_box(self):
        ball = AnalyticClassifier('ball', center=(0.0, 0.0), radius=0.5)
        result = perturb_same_class(ball, [0.0, 0.0], 0.2, 0)
        assert np.all((result.point >= 0) & (result.point <= 1))

    def test_retries_exhausted(self):
        ball = AnalyticClassifier('ball', center=(0.5, 0.5), radius=1e-9)
        result = perturb_same_class(ball, [0.5, 0.5], 0.1, 0, max_retries=10)
        assert not result.ok
        assert result.draws == 10

    def test_sigma_must_be_positive(self):
        with pytest.raises(ValueError):
            perturb_same_class(synthetic_classifier('ball'), [0.5, 0.5], 0.0, 0)

    def test_seeded(self):
        classifier = synthetic_classifier('ball')
        first = perturb_same_class(classifier, [0.5, 0.5], 0.05, [0, 3, 1])
        second = perturb_same_class(classifier, [0.5, 0.5], 0.05, [0, 3, 1])
        assert np.array_equal(first.point, second.point)


class TestRobustnessProtocol:
    def test_records_and_aggregates(self):
        classifier, dataset = ball_setup()
        report = robustness_protocol(classifier, dataset, dataset.features[:4], repetitions=2, seed=0,
                                     dataset_name='ball')
        df = report.frame()
        assert set(df['method']) <= {'robust_set', 'singleton_nearest'}
        assert len(df) + len([f for f in report.failures if f['perturbation_id'] is not None]) == 4 * 2 * 2
        aggregates = report.aggregates()
        assert list(aggregates.columns) == CSV_COLUMNS
        assert 'wall_time' not in set(aggregates['metric'])
        assert 'wall_time' in set(report.aggregates(include_timings=True)['metric'])

    def test_singleton_set_distances_agree(self):
        classifier, dataset = ball_setup()
        report = robustness_protocol(classifier, dataset, dataset.features[:3], repetitions=2, seed=1)
        single = report.frame().query("method == 'singleton_nearest'")
        assert np.allclose(single['l2_set_distance_sum'], single['l2_set_distance_max'])
        assert (single['l2_k_diversity'] == 0).all()
        assert single['degenerate_diversity'].all()

    def test_zero_repetitions(self):
        classifier, dataset = ball_setup()
        report = robustness_protocol(classifier, dataset, dataset.features[:2], repetitions=0)
        assert report.records == []
        assert report.aggregates().empty
        assert len(report.explanations) == 4

    def test_constant_method_has_zero_set_distance(self):
        classifier, dataset = ball_setup()
        fixed = CounterfactualSet(reference=np.zeros(2), reference_label=0,
                                  items=[Counterfactual(np.array([0.9, 0.9]), 1.0)])
        report = robustness_protocol(classifier, dataset, dataset.features[:2], repetitions=2,
                                     methods={'constant': lambda x: fixed})
        df = report.frame()
        assert (df['l2_set_distance_sum'] == 0).all()
        assert (df['l2_set_distance_max'] == 0).all()

    def test_failed_explanations_counted(self):
        classifier, dataset = ball_setup()
        empty = lambda x: CounterfactualSet(reference=np.asarray(x), reference_label=0, status='no_counterfactual')
        report = robustness_protocol(classifier, dataset, dataset.features[:3], repetitions=2,
                                     methods={'never': empty})
        assert report.records == []
        assert len(report.failures) == 3
        assert report.to_dict()['failure_count'] == 3

    def test_explanation_errors_recorded_and_run_continues(self):
        _, dataset = ball_setup()
        backend = BackendOutage()
        config = ExplainerConfig(minimise=False)
        inputs = np.array([[0.1, 0.5], [0.95, 0.5], [0.5, 0.5]])
        report = robustness_protocol(backend, dataset, inputs, config, repetitions=2, seed=0,
                                     methods={'robust_set': lambda x: explain(backend, dataset, x, config)})
        failed = [f for f in report.failures if f['input_id'] == 1]
        assert len(failed) == 1
        assert failed[0]['perturbation_id'] is None
        assert "Step 'classify' failed" in failed[0]['reason']
        assert {r['input_id'] for r in report.records} == {0, 2}
        assert report.to_dict()['failure_count'] == len(report.failures)

    def test_parallel_matches_sequential(self):
        classifier, dataset = ball_setup()
        sequential = robustness_protocol(classifier, dataset, dataset.features[:4], repetitions=2, seed=3, n_jobs=1)
        parallel = robustness_protocol(classifier, dataset, dataset.features[:4], repetitions=2, seed=3, n_jobs=2)
        assert json.dumps(sequential.to_dict(), sort_keys=True) == json.dumps(parallel.to_dict(), sort_keys=True)

    def test_outputs_byte_identical(self, tmp_path):
        classifier, dataset = ball_setup()
        paths = []
        for run in range(2):
            report = robustness_protocol(classifier, dataset, dataset.features[:3], repetitions=2, seed=5)
            paths.append((report.write_json(tmp_path / f'r{run}.json'), report.write_csv(tmp_path / f'r{run}.csv')))
        assert paths[0][0].read_bytes() == paths[1][0].read_bytes()
        assert paths[0][1].read_bytes() == paths[1][1].read_bytes()
        assert paths[0][1].read_text().startswith('method,dataset,metric,mean,std,schema_version\n')
        table = pd.read_csv(paths[0][1])
        assert list(table.columns) == CSV_COLUMNS + ['schema_version']
        assert (table['schema_version'] == 1).all()

    def test_population_std(self):
        classifier, dataset = ball_setup()
        report = robustness_protocol(classifier, dataset, dataset.features[:3], repetitions=3, seed=2)
        df = report.frame()
        aggregates = report.aggregates().set_index(['method', 'metric'])
        for method, group in df.groupby('method'):
            expected = np.std(group['l2_k_distance'].to_numpy(dtype=float))
            assert aggregates.loc[(method, 'l2_k_distance'), 'std'] == pytest.approx(expected)

    def test_win_rate(self):
        classifier, dataset = ball_setup()
        report = robustness_protocol(classifier, dataset, dataset.features[:4], repetitions=2, seed=0)
        rate = report.win_rate('robust_set', 'singleton_nearest')
        assert 0.0 <= rate <= 1.0
        assert np.isnan(report.win_rate('robust_set', 'absent'))

    def test_no_minimise_is_farther_and_more_diverse(self):
        classifier, dataset = ball_setup()
        inputs = dataset.features[:10]
        minimised = robustness_protocol(classifier, dataset, inputs, ExplainerConfig(), repetitions=2, seed=0)
        plain = robustness_protocol(classifier, dataset, inputs, ExplainerConfig(minimise=False),
                                    repetitions=2, seed=0)
        m = minimised.frame().query("method == 'robust_set'")
        p = plain.frame().query("method == 'robust_set'")
        assert p['l2_k_distance'].mean() >= m['l2_k_distance'].mean()
        assert p['l2_k_diversity'].mean() >= m['l2_k_diversity'].mean()

    def test_sets_of_two_or_more_are_diverse(self):
        classifier, dataset = ball_setup()
        report = robustness_protocol(classifier, dataset, dataset.features[:10], repetitions=2, seed=0)
        multi = report.frame().query("method == 'robust_set' and n_counterfactuals >= 2")
        assert len(multi) > 0
        assert (multi['l2_k_diversity'] > 0).all()
        assert multi['l2_k_diversity'].mean() > 0

    def test_negative_repetitions(self):
        classifier, dataset = ball_setup()
        with pytest.raises(ValueError):
            robustness_protocol(classifier, dataset, dataset.features[:1], repetitions=-1)


class TestSweep:
    def test_grid_rows(self):
        classifier, dataset = ball_setup(n=150)
        table = hyperparameter_sweep(classifier, dataset, dataset.features[:2], betas=(0.0, 0.5), gammas=(0.1,),
                                     modes=(Step3Mode.ANGLE,), repetitions=1)
        assert isinstance(table, pd.DataFrame)
        assert list(table.columns[:4]) == ['method', 'step3', 'beta', 'gamma']
        assert set(table['beta']) == {0.0, 0.5}
