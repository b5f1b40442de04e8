import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgeval import metrics
from kgeval.metrics import MetricError, apply_scenario

import oracles


labels = st.lists(st.integers(0, 4), min_size=2, max_size=30)


def test_accuracy_and_rmse_examples():
    assert metrics.accuracy(["a", "b", "c"], ["a", "b", "c"]) == 1.0
    assert metrics.rmse([1.5, 2.0], [1.5, 2.0]) == 0.0
    assert metrics.rmse([0, 0], [1, 1]) == pytest.approx(1.0, abs=1e-12)


def test_length_mismatch_raises():
    with pytest.raises(MetricError):
        metrics.accuracy([1, 2], [1])
    with pytest.raises(MetricError):
        metrics.ari([0, 1, 1], [0, 1])


def test_ari_examples():
    assert metrics.ari([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
    assert metrics.ari([0, 0, 1, 1], [5, 5, 3, 3]) == 1.0
    assert metrics.ari([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5, abs=1e-12)


def test_nmi_identical():
    assert metrics.nmi([0, 0, 1, 2], [0, 0, 1, 2]) == pytest.approx(1.0)
    assert metrics.nmi([0, 0, 1, 2], [2, 2, 0, 1]) == pytest.approx(1.0)


def test_cluster_accuracy_examples():
    assert metrics.cluster_accuracy([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
    assert metrics.cluster_accuracy([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
    assert metrics.cluster_accuracy([0, 0, 1, 1], [0, 0, 0, 0]) == 0.5
    # noise never counts as correct
    assert metrics.cluster_accuracy([0, 0, 1, 1], [-1, -1, -1, -1]) == 0.0


def test_correlation_examples():
    x = [1.0, 2.0, 5.0, 7.0, 11.0]
    y = [2 * v + 3 for v in x]
    assert metrics.pearson(x, y) == pytest.approx(1.0)
    assert metrics.spearman(x, y) == pytest.approx(1.0)
    assert metrics.spearman(x, x[::-1]) == pytest.approx(-1.0)
    assert metrics.kendall_tau_b(x, x[::-1]) == pytest.approx(-1.0)
    assert metrics.kendall_tau_b([1, 2, 3, 4], [1, 2, 4, 3]) == pytest.approx(2 / 3)


def test_zero_variance_is_zero():
    assert metrics.pearson([1, 1, 1], [1, 2, 3]) == 0.0
    assert metrics.spearman([1, 1, 1], [1, 2, 3]) == 0.0
    assert metrics.kendall_tau_b([1, 1, 1], [1, 2, 3]) == 0.0


def test_harmonic_mean():
    assert metrics.harmonic_mean(0.2, 0.2) == pytest.approx(0.2)
    assert round(metrics.harmonic_mean(0.207, 0.294), 3) == 0.243
    assert metrics.harmonic_mean(0.0, 0.0) == 0.0
    assert metrics.harmonic_mean(-0.3, 0.1) == 0.0


def test_f1_at_k():
    assert metrics.f1_at_k([1, 2, 3], [1, 2, 3], 3) == 1.0
    assert metrics.f1_at_k([1, 2], [3, 4], 2) == 0.0
    assert metrics.f1_at_k([1, 2, 3, 4, 5], [1, 2, 3, 4, 5], 10) == pytest.approx(2 / 3)
    with pytest.raises(MetricError):
        metrics.f1_at_k([], [1], 0)


@settings(max_examples=200, deadline=None)
@given(labels, st.data())
def test_partition_metrics_match_oracles(a, data):
    b = data.draw(st.lists(st.integers(-1, 4), min_size=len(a), max_size=len(a)))
    assert metrics.ari(a, b) == pytest.approx(oracles.ari(a, b), abs=1e-9)
    assert metrics.nmi(a, b) == pytest.approx(oracles.nmi(a, b), abs=1e-9)
    assert metrics.cluster_accuracy(a, b) == pytest.approx(oracles.cluster_accuracy(a, b), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(labels, st.permutations(range(5)), st.permutations(range(5)))
def test_ari_nmi_relabel_invariant(a, perm_a, perm_b):
    rng = np.random.default_rng(len(a))
    b = rng.integers(0, 3, size=len(a)).tolist()
    a2 = [perm_a[v] for v in a]
    b2 = [perm_b[v] for v in b]
    assert metrics.ari(a, b) == pytest.approx(metrics.ari(a2, b2), abs=1e-12)
    assert metrics.nmi(a, b) == pytest.approx(metrics.nmi(a2, b2), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=2, max_size=30), st.data())
def test_rank_metrics_match_oracles(x, data):
    y = data.draw(st.lists(st.integers(-5, 5), min_size=len(x), max_size=len(x)))
    assert metrics.pearson(x, y) == pytest.approx(oracles.pearson(x, y), abs=1e-9)
    assert metrics.spearman(x, y) == pytest.approx(oracles.spearman(x, y), abs=1e-9)
    assert metrics.kendall_tau_b(x, y) == pytest.approx(oracles.kendall_tau_b(x, y), abs=1e-9)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), st.data())
def test_rmse_bounds(gold, data):
    pred = data.draw(st.lists(st.floats(-1e3, 1e3), min_size=len(gold), max_size=len(gold)))
    value = metrics.rmse(gold, pred)
    assert value >= 0
    assert metrics.rmse(gold, gold) == 0.0


def test_ari_random_partitions_centered():
    rng = np.random.default_rng(7)
    values = [
        metrics.ari(rng.integers(0, 4, 50), rng.integers(0, 4, 50)) for _ in range(10_000)
    ]
    assert abs(np.mean(values)) < 0.02


class TestApplyScenario:
    def test_full_coverage_equal(self):
        s = apply_scenario("classification", "accuracy", ["a", "b"], ["a", "a"], [True, True])
        assert s.value_known == s.value_all == 0.5
        assert s.coverage == 1.0

    def test_half_coverage_classification(self):
        gold = ["a", "b", "a", "b"]
        s = apply_scenario("classification", "accuracy", gold, gold, [True, True, False, False])
        assert s.value_known == 1.0
        assert s.value_all == 0.5
        assert s.coverage == 0.5

    def test_regression_train_mean_scaling(self):
        # unmapped gold equals the fallback, so mapped errors are the only errors
        gold = [1.0, 2.0, 3.0, 2.0, 2.0, 2.0]
        pred = [1.5, 2.5, 2.0, 0.0, 0.0, 0.0]
        mapped = [True, True, True, False, False, False]
        s = apply_scenario("regression", "rmse", gold, pred, mapped, fallback=2.0)
        assert s.value_all == pytest.approx(s.value_known * math.sqrt(0.5), abs=1e-12)
        assert s.direction == metrics.LOWER_BETTER

    def test_clustering_unmapped_penalized(self):
        gold = [0, 0, 1, 1]
        pred = [0, 0, 1, 1]
        acc = apply_scenario("clustering", "accuracy", gold, pred, [True, True, True, False])
        assert acc.value_known == 1.0
        assert acc.value_all == 0.75
        ari = apply_scenario("clustering", "ari", gold, pred, [True, True, True, False])
        assert ari.value_known == 1.0
        assert ari.value_all < 1.0

    def test_empty_raises(self):
        with pytest.raises(MetricError):
            apply_scenario("classification", "accuracy", [], [], [])
