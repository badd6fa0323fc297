"""Tests for distance metrics and set distances."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geometry import (
    CHEBYSHEV, EUCLIDEAN, MANHATTAN,
    DimensionMismatchError, DistanceMetric, EmptySetError, MetricKind,
    cosine_distance, distance, set_distance_max, set_distance_sum,
)

METRICS = [MANHATTAN, EUCLIDEAN, CHEBYSHEV]


@st.composite
def set_pair_strategy(draw, max_size=6):
    """Two point sets of the same dimension (2-5) drawn from a seeded generator."""
    dim = draw(st.integers(min_value=2, max_value=5))
    n1 = draw(st.integers(min_value=1, max_value=max_size))
    n2 = draw(st.integers(min_value=1, max_value=max_size))
    seed = draw(st.integers(min_value=0, max_value=2**31 - 1))
    rng = np.random.default_rng(seed)
    return rng.uniform(-5.0, 5.0, (n1, dim)), rng.uniform(-5.0, 5.0, (n2, dim))


class TestDistance:
    def test_euclidean(self):
        assert distance(EUCLIDEAN, [0, 0], [3, 4]) == pytest.approx(5.0)

    def test_manhattan(self):
        assert distance(MANHATTAN, [1, 2], [4, 0]) == pytest.approx(5.0)

    def test_chebyshev(self):
        assert distance(CHEBYSHEV, [1, 2], [4, 0]) == pytest.approx(3.0)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            distance(EUCLIDEAN, [0, 0], [1, 2, 3])

    def test_from_name(self):
        assert DistanceMetric.from_name('linf').kind is MetricKind.CHEBYSHEV
        with pytest.raises(ValueError):
            DistanceMetric.from_name('l3')

    def test_weights_scale_coordinates(self):
        weighted = DistanceMetric(MetricKind.MANHATTAN, (2.0, 0.5))
        assert distance(weighted, [0, 0], [1, 4]) == pytest.approx(2.0 + 2.0)

    def test_weight_count_must_match(self):
        weighted = DistanceMetric(MetricKind.EUCLIDEAN, (1.0, 1.0, 1.0))
        with pytest.raises(DimensionMismatchError):
            distance(weighted, [0, 0], [1, 1])

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            DistanceMetric(MetricKind.EUCLIDEAN, (1.0, -1.0))

    def test_pairwise_matches_distance(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
        for metric in METRICS:
            matrix = metric.pairwise(a, b)
            assert matrix[2, 4] == pytest.approx(distance(metric, a[2], b[4]))


@st.composite
def triple_strategy(draw):
    """A metric (optionally with positive weights) and three points of matching dimension."""
    dim = draw(st.integers(min_value=1, max_value=5))
    kind = draw(st.sampled_from(list(MetricKind)))
    seed = draw(st.integers(min_value=0, max_value=2**31 - 1))
    rng = np.random.default_rng(seed)
    weights = tuple(rng.uniform(0.1, 3.0, dim)) if draw(st.booleans()) else None
    a, b, c = rng.uniform(-5.0, 5.0, (3, dim))
    return DistanceMetric(kind, weights), a, b, c


class TestMetricAxioms:
    @settings(max_examples=200, deadline=None)
    @given(triple_strategy())
    def test_axioms(self, triple):
        metric, a, b, c = triple
        assert distance(metric, a, a) == 0.0
        assert distance(metric, a, b) > 0.0
        assert distance(metric, a, b) == pytest.approx(distance(metric, b, a))
        assert distance(metric, a, c) <= distance(metric, a, b) + distance(metric, b, c) + 1e-9

    @pytest.mark.parametrize('metric', METRICS)
    def test_triangle_on_seeded_triples(self, metric):
        rng = np.random.default_rng(11)
        for _ in range(500):
            a, b, c = rng.normal(size=(3, 4))
            assert distance(metric, a, c) <= distance(metric, a, b) + distance(metric, b, c) + 1e-9


class TestSetDistances:
    def test_identical_sets(self):
        s = [(0, 0), (1, 1)]
        assert set_distance_sum(EUCLIDEAN, s, s) == 0.0
        assert set_distance_max(EUCLIDEAN, s, s) == 0.0

    def test_singletons(self):
        assert set_distance_sum(EUCLIDEAN, [(0, 0)], [(3, 4)]) == pytest.approx(5.0)
        assert set_distance_max(EUCLIDEAN, [(0, 0)], [(3, 4)]) == pytest.approx(5.0)

    def test_hand_computed(self):
        s1, s2 = [(0, 0), (2, 0)], [(0, 0)]
        assert set_distance_sum(EUCLIDEAN, s1, s2) == pytest.approx(0.5)
        assert set_distance_max(EUCLIDEAN, s1, s2) == pytest.approx(1.0)

    def test_empty_set(self):
        with pytest.raises(EmptySetError):
            set_distance_sum(EUCLIDEAN, [], [(0, 0)])
        with pytest.raises(EmptySetError):
            set_distance_max(EUCLIDEAN, [(0, 0)], np.empty((0, 2)))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            set_distance_max(EUCLIDEAN, [(0, 0)], [(0, 0, 0)])

    @settings(max_examples=200, deadline=None)
    @given(pair=set_pair_strategy(), metric=st.sampled_from(METRICS))
    def test_sum_never_exceeds_max(self, pair, metric):
        s1, s2 = pair
        assert set_distance_sum(metric, s1, s2) <= set_distance_max(metric, s1, s2) + 1e-12

    @settings(max_examples=100, deadline=None)
    @given(pair=set_pair_strategy(max_size=1), metric=st.sampled_from(METRICS))
    def test_singletons_reduce_to_point_distance(self, pair, metric):
        s1, s2 = pair
        d = distance(metric, s1[0], s2[0])
        assert abs(set_distance_sum(metric, s1, s2) - d) <= 1e-12
        assert abs(set_distance_max(metric, s1, s2) - d) <= 1e-12

    @settings(max_examples=50, deadline=None)
    @given(pair=set_pair_strategy(), metric=st.sampled_from(METRICS))
    def test_symmetric_and_permutation_invariant(self, pair, metric):
        s1, s2 = pair
        assert set_distance_max(metric, s1, s2) == pytest.approx(set_distance_max(metric, s2, s1))
        assert set_distance_sum(metric, s1[::-1], s2) == pytest.approx(set_distance_sum(metric, s1, s2))

    def test_seeded_lemma_suite(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            dim = int(rng.integers(2, 6))
            s1 = rng.normal(size=(int(rng.integers(1, 7)), dim))
            s2 = rng.normal(size=(int(rng.integers(1, 7)), dim))
            for metric in METRICS:
                assert set_distance_sum(metric, s1, s2) <= set_distance_max(metric, s1, s2) + 1e-12


class TestCosineDistance:
    def test_orthogonal(self):
        assert cosine_distance(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(1.0)

    def test_opposite(self):
        assert cosine_distance(np.array([1.0, 0.0]), np.array([-2.0, 0.0])) == pytest.approx(2.0)

    def test_zero_vector(self):
        with pytest.raises(ValueError):
            cosine_distance(np.zeros(2), np.array([1.0, 0.0]))
