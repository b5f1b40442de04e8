"""Evaluation metrics for every task type, plus known/all scenario accounting.

All functions are pure and operate on plain sequences or numpy arrays.
Degenerate inputs (zero variance, empty intersections) return 0 instead of
NaN so that downstream aggregation never propagates NaN.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import rankdata

HIGHER_BETTER = "higher-better"
LOWER_BETTER = "lower-better"

DIRECTIONS = {
    "accuracy": HIGHER_BETTER,
    "rmse": LOWER_BETTER,
    "ari": HIGHER_BETTER,
    "nmi": HIGHER_BETTER,
    "spearman": HIGHER_BETTER,
    "pearson": HIGHER_BETTER,
    "harmonic_mean": HIGHER_BETTER,
    "kendall_tau": HIGHER_BETTER,
    "f1": HIGHER_BETTER,
}


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioMetrics:
    """One metric under both accounting scenarios.

    ``value_known`` is computed over mapped entities only, ``value_all`` over
    every dataset entity with the task's penalty rule applied to unmapped ones.
    """

    metric: str
    value_known: float
    value_all: float
    coverage: float
    direction: str = HIGHER_BETTER

    def to_dict(self) -> dict[str, Any]:
        return {
            "metric": self.metric,
            "value_known": self.value_known,
            "value_all": self.value_all,
            "coverage": self.coverage,
            "direction": self.direction,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ScenarioMetrics:
        return cls(**data)


def _pair(a: Sequence, b: Sequence, min_len: int = 1) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[0] != b.shape[0]:
        raise MetricError(f"length mismatch: {a.shape[0]} != {b.shape[0]}")
    if a.shape[0] < min_len:
        raise MetricError(f"need at least {min_len} values, got {a.shape[0]}")
    return a, b


def accuracy(gold: Sequence, predicted: Sequence) -> float:
    gold, predicted = _pair(gold, predicted)
    return float(np.mean([g == p for g, p in zip(gold.tolist(), predicted.tolist())]))


def rmse(gold: Sequence[float], predicted: Sequence[float]) -> float:
    gold, predicted = _pair(gold, predicted)
    diff = gold.astype(float) - predicted.astype(float)
    return float(np.sqrt(np.mean(diff * diff)))


def _contingency(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _, a_idx = np.unique(a, return_inverse=True)
    _, b_idx = np.unique(b, return_inverse=True)
    table = np.zeros((a_idx.max() + 1, b_idx.max() + 1), dtype=np.int64)
    np.add.at(table, (a_idx, b_idx), 1)
    return table


def _comb2(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.float64)
    return x * (x - 1) / 2.0


def ari(labels_a: Sequence, labels_b: Sequence) -> float:
    """Adjusted Rand index via the pair-counting contingency formula.

    Returns 1.0 when the expected and maximum index coincide, which only
    happens for trivially identical partitions (all singletons or one block).
    """
    a, b = _pair(labels_a, labels_b, min_len=2)
    table = _contingency(a, b)
    sum_cells = _comb2(table).sum()
    sum_rows = _comb2(table.sum(axis=1)).sum()
    sum_cols = _comb2(table.sum(axis=0)).sum()
    total = _comb2(np.array([a.shape[0]]))[0]
    expected = sum_rows * sum_cols / total
    maximum = 0.5 * (sum_rows + sum_cols)
    if maximum == expected:
        return 1.0
    return float((sum_cells - expected) / (maximum - expected))


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(labels_a: Sequence, labels_b: Sequence) -> float:
    """Normalized mutual information, arithmetic-mean normalization, natural log."""
    a, b = _pair(labels_a, labels_b, min_len=2)
    table = _contingency(a, b).astype(np.float64)
    n = table.sum()
    h_a = _entropy(table.sum(axis=1))
    h_b = _entropy(table.sum(axis=0))
    if h_a == 0.0 and h_b == 0.0:
        return 1.0
    rows, cols = np.nonzero(table)
    joint = table[rows, cols] / n
    pa = table.sum(axis=1)[rows] / n
    pb = table.sum(axis=0)[cols] / n
    mi = float((joint * np.log(joint / (pa * pb))).sum())
    return float(max(mi, 0.0) / (0.5 * (h_a + h_b)))


def cluster_accuracy(gold: Sequence, predicted: Sequence) -> float:
    """Best accuracy over one-to-one assignments of predicted clusters to gold classes.

    Negative predicted labels denote noise and are never assigned.
    """
    gold, predicted = _pair(gold, predicted)
    keep = np.array([not _is_noise(p) for p in predicted.tolist()], dtype=bool)
    if not keep.any():
        return 0.0
    table = _contingency(gold[keep], predicted[keep])
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / gold.shape[0])


def _is_noise(label: Any) -> bool:
    return isinstance(label, (int, np.integer)) and label < 0


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x, y = _pair(x, y, min_len=2)
    x = x.astype(np.float64) - np.mean(x)
    y = y.astype(np.float64) - np.mean(y)
    denom = np.sqrt((x * x).sum() * (y * y).sum())
    if denom == 0.0:
        return 0.0
    return float(np.clip((x * y).sum() / denom, -1.0, 1.0))


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average ranks."""
    x, y = _pair(x, y, min_len=2)
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


def kendall_tau_b(x: Sequence[float], y: Sequence[float]) -> float:
    """Kendall rank correlation with the tau-b tie correction."""
    x, y = _pair(x, y, min_len=2)
    x = x.astype(np.float64)
    y = y.astype(np.float64)
    iu = np.triu_indices(x.shape[0], k=1)
    dx = np.sign(x[:, None] - x[None, :])[iu]
    dy = np.sign(y[:, None] - y[None, :])[iu]
    s = (dx * dy).sum()
    denom = np.sqrt(np.count_nonzero(dx) * np.count_nonzero(dy))
    if denom == 0.0:
        return 0.0
    return float(s / denom)


def harmonic_mean(a: float, b: float) -> float:
    if a + b <= 0:
        return 0.0
    return 2.0 * a * b / (a + b)


def f1_at_k(topk: Sequence, test: Sequence, k: int) -> float:
    """F1 of precision@k and recall@k for one ranked list."""
    if k <= 0:
        raise MetricError("k must be positive")
    if len(topk) > k:
        raise MetricError(f"top-k list has {len(topk)} items for k={k}")
    test_set = set(test)
    hits = len(set(topk) & test_set)
    precision = hits / k
    recall = hits / len(test_set) if test_set else 0.0
    return harmonic_mean(precision, recall)


# Sentinel prediction for unmapped entities in classification: never equal to a gold label.
UNMAPPED = object()


def apply_scenario(
    task_type: str,
    metric: str,
    gold: Sequence,
    predicted: Sequence,
    mapped: Sequence[bool],
    fallback: float | None = None,
    coverage: float | None = None,
) -> ScenarioMetrics:
    """Score per-entity outcomes under the known-only and all-entity scenarios.

    ``predicted`` entries of unmapped entities are ignored and replaced by the
    task type's penalty: classification marks them wrong, regression predicts
    ``fallback`` (the train mean), clustering puts each one in its own
    singleton cluster (so cluster accuracy counts it as an error).
    """
    mapped = np.asarray(mapped, dtype=bool)
    gold = list(gold)
    predicted = list(predicted)
    if not gold:
        raise MetricError("no outcomes to score")
    if not (len(gold) == len(predicted) == mapped.shape[0]):
        raise MetricError("gold, predicted and mapped must have equal lengths")

    penalized = list(predicted)
    unmapped_idx = np.flatnonzero(~mapped)
    if task_type == "classification":
        for i in unmapped_idx:
            penalized[i] = UNMAPPED
    elif task_type == "regression":
        if unmapped_idx.size and fallback is None:
            raise MetricError("regression scenario needs a fallback prediction")
        for i in unmapped_idx:
            penalized[i] = fallback
    elif task_type == "clustering":
        if metric == "accuracy":
            # noise label: never assigned to a gold class
            for i in unmapped_idx:
                penalized[i] = -1
        else:
            penalized = _noise_to_singletons(penalized, ~mapped)
            predicted = _noise_to_singletons(predicted, np.zeros_like(mapped))
    else:
        raise MetricError(f"no penalty rule for task type {task_type!r}")

    if task_type == "clustering" and metric == "accuracy":
        fn = cluster_accuracy
    else:
        fn = _METRIC_FUNCS[metric]
    cov = float(mapped.mean()) if coverage is None else coverage
    if mapped.any():
        gold_known = [g for g, m in zip(gold, mapped) if m]
        pred_known = [p for p, m in zip(predicted, mapped) if m]
        value_known = _score(fn, gold_known, pred_known)
    else:
        value_known = float("nan")
    value_all = _score(fn, gold, penalized)
    return ScenarioMetrics(metric, value_known, value_all, cov, DIRECTIONS[metric])


def _noise_to_singletons(labels: list, force: np.ndarray) -> list:
    """Give every noise-labelled (negative) or forced entry its own fresh cluster."""
    ints = [int(p) for p, f in zip(labels, force) if not f and isinstance(p, (int, np.integer))]
    next_label = max(ints, default=-1) + 1
    out = list(labels)
    for i, (p, f) in enumerate(zip(labels, force)):
        if f or _is_noise(p):
            out[i] = next_label
            next_label += 1
    return out


def _score(fn, gold: list, predicted: list) -> float:
    if fn is accuracy:
        return float(np.mean([g == p for g, p in zip(gold, predicted)]))
    if fn is cluster_accuracy:
        return cluster_accuracy(np.asarray(gold, dtype=object), np.asarray(predicted, dtype=np.int64))
    if len(gold) < 2 and fn in (ari, nmi):
        return 1.0
    return fn(gold, predicted)


_METRIC_FUNCS = {
    "accuracy": accuracy,
    "rmse": rmse,
    "ari": ari,
    "nmi": nmi,
    "cluster_accuracy": cluster_accuracy,
}
