"""Tests for CSV ingestion, scaling, splitting and synthetic datasets."""

import logging

import numpy as np
import pytest

from data_processor import (
    SYNTHETIC_KINDS, Dataset, DatasetParseError, SplitSpec, load_dataset, minmax_scale,
    prepare_splits, scaler_from_bounds, synthetic_classifier, synthetic_dataset, train_test_split,
)


def write_csv(tmp_path, text, name='data.csv'):
    path = tmp_path / name
    path.write_text(text, encoding='utf-8')
    return path


def small_dataset(n):
    return Dataset(['a', 'b'], np.arange(2 * n, dtype=float).reshape(n, 2), np.arange(n) % 2)


class TestLoadDataset:
    def test_three_rows(self, tmp_path):
        path = write_csv(tmp_path, 'x1,x2,label\n0.1,0.2,0\n0.3,0.4,1\n0.5,0.6,0\n')
        dataset = load_dataset(path)
        assert len(dataset) == 3
        assert dataset.n_features == 2
        assert dataset.feature_names == ['x1', 'x2']
        assert dataset.labels.tolist() == [0, 1, 0]

    def test_label_out_of_range(self):
        with pytest.raises(DatasetParseError) as exc:
            load_dataset('fixtures/bad_label.csv')
        assert exc.value.row == 3
        assert exc.value.column == 'label'

    def test_non_numeric_cell(self):
        with pytest.raises(DatasetParseError) as exc:
            load_dataset('fixtures/bad_value.csv')
        assert exc.value.row == 3
        assert exc.value.column == 'x2'

    def test_empty_file(self, tmp_path):
        with pytest.raises(DatasetParseError):
            load_dataset(write_csv(tmp_path, ''))

    def test_missing_cell(self, tmp_path):
        with pytest.raises(DatasetParseError):
            load_dataset(write_csv(tmp_path, 'x1,x2,label\n0.1,,0\n0.3,0.4,1\n'))

    def test_single_row(self, tmp_path):
        with pytest.raises(DatasetParseError):
            load_dataset(write_csv(tmp_path, 'x1,label\n0.1,0\n'))

    def test_label_column_only(self, tmp_path):
        with pytest.raises(DatasetParseError):
            load_dataset(write_csv(tmp_path, 'label\n0\n1\n'))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / 'absent.csv')

    def test_fixture(self):
        dataset = load_dataset('fixtures/blobs.csv')
        assert dataset.feature_names == ['income', 'debt']
        assert set(dataset.labels.tolist()) == {0, 1}


class TestScaling:
    def test_values_map_to_unit_interval(self):
        dataset = Dataset(['a'], [[2.0], [4.0], [6.0]], [0, 1, 0])
        scaled = minmax_scale(dataset)
        assert scaled.features[:, 0].tolist() == pytest.approx([0.0, 0.5, 1.0])
        assert scaled.scaler_min.tolist() == [2.0]
        assert scaled.scaler_max.tolist() == [6.0]

    def test_constant_feature(self, caplog):
        dataset = Dataset(['a', 'b'], [[5.0, 1.0], [5.0, 2.0]], [0, 1])
        with caplog.at_level(logging.WARNING):
            scaled = minmax_scale(dataset)
        assert scaled.features[:, 0].tolist() == [0.0, 0.0]
        assert 'constant' in caplog.text

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        dataset = Dataset(['a', 'b', 'c'], rng.normal(50, 20, (30, 3)), rng.integers(0, 2, 30))
        scaled = minmax_scale(dataset)
        assert np.allclose(scaled.unscale(scaled.features), dataset.features, atol=1e-12, rtol=0)

    def test_monotone_per_feature(self):
        rng = np.random.default_rng(1)
        dataset = Dataset(['a'], rng.normal(size=(20, 1)), rng.integers(0, 2, 20))
        scaled = minmax_scale(dataset)
        assert np.array_equal(np.argsort(dataset.features[:, 0]), np.argsort(scaled.features[:, 0]))

    def test_reference_scaling_clips(self):
        train = Dataset(['a'], [[0.0], [10.0]], [0, 1])
        test = Dataset(['a'], [[-5.0], [5.0], [20.0]], [0, 1, 1])
        scaled = minmax_scale(test, reference=train)
        assert scaled.features[:, 0].tolist() == pytest.approx([0.0, 0.5, 1.0])

    def test_scaler_from_bounds(self):
        scaler = scaler_from_bounds([0.0, 10.0], [2.0, 20.0])
        assert scaler.transform([[1.0, 15.0]])[0].tolist() == pytest.approx([0.5, 0.5])


class TestSplit:
    def test_sizes(self):
        train, test = train_test_split(small_dataset(100), SplitSpec(0.25, seed=0))
        assert (len(train), len(test)) == (75, 25)

    def test_rounding_rule(self):
        train, test = train_test_split(small_dataset(3), SplitSpec(0.5, seed=0))
        assert {len(train), len(test)} == {1, 2}

    def test_deterministic(self):
        first = train_test_split(small_dataset(40), SplitSpec(seed=3))
        second = train_test_split(small_dataset(40), SplitSpec(seed=3))
        assert np.array_equal(first[1].features, second[1].features)

    def test_partition(self):
        dataset = small_dataset(40)
        train, test = train_test_split(dataset)
        rows = sorted(map(tuple, np.vstack([train.features, test.features])))
        assert rows == sorted(map(tuple, dataset.features))

    @pytest.mark.parametrize('fraction', [0.0, 1.0, 1.5, -0.1])
    def test_fraction_out_of_range(self, fraction):
        with pytest.raises(ValueError):
            SplitSpec(test_fraction=fraction)

    def test_prepare_splits_fits_on_train(self):
        dataset = load_dataset('fixtures/blobs.csv')
        train, test = prepare_splits(dataset)
        assert train.features.min() == pytest.approx(0.0)
        assert train.features.max() == pytest.approx(1.0)
        assert np.all((test.features >= 0) & (test.features <= 1))
        assert np.array_equal(train.scaler_min, test.scaler_min)


class TestSynthetic:
    @pytest.mark.parametrize('kind', SYNTHETIC_KINDS)
    def test_labels_match_generator(self, kind):
        dataset = synthetic_dataset(kind, 200, seed=0)
        assert np.array_equal(dataset.labels, synthetic_classifier(kind).predict(dataset.features))
        assert set(dataset.labels.tolist()) == {0, 1}
        assert np.all((dataset.features >= 0) & (dataset.features <= 1))

    def test_deterministic(self):
        assert np.array_equal(synthetic_dataset('ball', 50, 4).features, synthetic_dataset('ball', 50, 4).features)

    def test_minimum_size(self):
        with pytest.raises(ValueError):
            synthetic_dataset('ball', 5)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            synthetic_dataset('spiral', 50)
