"""Classification, regression and clustering on entity-embedding features.

Supervised tasks use k-fold cross-validation over the mapped entities.
Unmapped entities are dealt round-robin into the same folds so that each
fold's test set also carries its share of unmapped entities; they never
enter training and are scored with the task type's penalty rule in the
all-entities scenario.
"""

from __future__ import annotations

import logging
from typing import Any, Mapping, Sequence

import numpy as np

from ..datasets import CLASSIFICATION, CLUSTERING, REGRESSION, TabularDataset
from ..mapping import DatasetEntity
from ..metrics import UNMAPPED, apply_scenario
from ..vectors import EmbeddingSet
from .algorithms import (
    DBSCAN,
    AgglomerativeClustering,
    DecisionTreeRegressor,
    GaussianNaiveBayes,
    KMeans,
    KNNClassifier,
    KNNRegressor,
    LinearSVM,
    RidgeRegression,
    TaskError,
)
from .common import FAILED, OK, SKIPPED, TaskRun, features

logger = logging.getLogger(__name__)

ALGORITHMS: dict[str, dict[str, type]] = {
    CLASSIFICATION: {"NaiveBayes": GaussianNaiveBayes, "KNN": KNNClassifier, "SVM": LinearSVM},
    REGRESSION: {"LinearRegression": RidgeRegression, "KNN": KNNRegressor, "DecisionTree": DecisionTreeRegressor},
    CLUSTERING: {"KMeans": KMeans, "DBSCAN": DBSCAN, "Agglomerative": AgglomerativeClustering},
}

DEFAULT_GRIDS: dict[str, dict[str, list[dict[str, Any]]]] = {
    CLASSIFICATION: {
        "NaiveBayes": [{}],
        "KNN": [{"k": 1}, {"k": 3}, {"k": 5}, {"k": 15}],
        "SVM": [{"learning_rate": 0.1, "epochs": 100}, {"learning_rate": 0.01, "epochs": 100}],
    },
    REGRESSION: {
        "LinearRegression": [{}],
        "KNN": [{"k": 1}, {"k": 3}, {"k": 5}, {"k": 15}],
        "DecisionTree": [{"max_depth": 3}, {"max_depth": 5}, {"max_depth": None}],
    },
    CLUSTERING: {
        # n_clusters comes from the dataset
        "KMeans": [{}],
        "DBSCAN": [{"eps": 0.3, "min_samples": 5}, {"eps": 0.5, "min_samples": 5}, {"eps": 0.7, "min_samples": 5}],
        "Agglomerative": [{}],
    },
}

METRICS = {CLASSIFICATION: ("accuracy",), REGRESSION: ("rmse",), CLUSTERING: ("ari", "nmi", "accuracy")}

_SEEDED = (LinearSVM, KMeans)


def default_grid(task_type: str, algorithm: str) -> list[dict[str, Any]]:
    try:
        return [dict(p) for p in DEFAULT_GRIDS[task_type][algorithm]]
    except KeyError:
        raise TaskError(f"no algorithm {algorithm!r} for task type {task_type!r}") from None


def make_estimator(task_type: str, algorithm: str, params: Mapping[str, Any], seed: int = 0):
    try:
        cls = ALGORITHMS[task_type][algorithm]
    except KeyError:
        raise TaskError(f"no algorithm {algorithm!r} for task type {task_type!r}") from None
    params = dict(params)
    if cls in _SEEDED:
        params.setdefault("random_state", seed)
    return cls(**params)


def make_folds(targets: Sequence, mapped: np.ndarray, n_folds: int, seed: int, stratify: bool) -> np.ndarray:
    """Fold number per entity.

    Mapped entities are shuffled (within class when stratifying), grouped by
    class and dealt round-robin; unmapped entities continue the deal.
    """
    rng = np.random.default_rng(seed)
    mapped = np.asarray(mapped, dtype=bool)
    folds = np.empty(mapped.shape[0], dtype=np.int64)
    mapped_idx = np.flatnonzero(mapped)
    if stratify:
        labels = np.asarray([str(targets[i]) for i in mapped_idx])
        order = []
        for cls in np.unique(labels):
            members = mapped_idx[labels == cls]
            order.extend(members[rng.permutation(members.shape[0])])
        order = np.array(order, dtype=np.int64)
    else:
        order = mapped_idx[rng.permutation(mapped_idx.shape[0])]
    folds[order] = np.arange(order.shape[0]) % n_folds
    unmapped_idx = np.flatnonzero(~mapped)
    unmapped_idx = unmapped_idx[rng.permutation(unmapped_idx.shape[0])]
    folds[unmapped_idx] = (order.shape[0] + np.arange(unmapped_idx.shape[0])) % n_folds
    return folds


def _skipped(algorithm: str, grid, n_folds: int, reason: str, coverage: float) -> list[TaskRun]:
    return [TaskRun(algorithm, dict(p), f, SKIPPED, reason, (), coverage) for p in grid for f in range(n_folds)]


def run_supervised_task(
    task_type: str,
    dataset: TabularDataset,
    emb: EmbeddingSet,
    lookup: Mapping[DatasetEntity, int],
    algorithm: str,
    grid: Sequence[Mapping[str, Any]] | None = None,
    n_folds: int = 10,
    seed: int = 0,
) -> list[TaskRun]:
    """One run per (hyperparameter assignment, fold), in grid-then-fold order."""
    if task_type not in (CLASSIFICATION, REGRESSION):
        raise TaskError(f"{task_type} is not a supervised task type")
    grid = [dict(p) for p in (grid if grid is not None else default_grid(task_type, algorithm))]
    X, mapped = features(dataset.entities, lookup, emb)
    n_mapped = int(mapped.sum())
    coverage = n_mapped / len(dataset.entities) if dataset.entities else 0.0
    if n_mapped < n_folds:
        reason = f"only {n_mapped} mapped entities for {n_folds} folds"
        logger.info("%s/%s: %s", task_type, dataset.name, reason)
        return _skipped(algorithm, grid, n_folds, reason, coverage)

    targets = list(dataset.targets)
    folds = make_folds(targets, mapped, n_folds, seed, stratify=task_type == CLASSIFICATION)
    # row of each mapped entity inside X
    row = np.cumsum(mapped) - 1
    y_all = np.asarray(targets, dtype=np.float64 if task_type == REGRESSION else object)
    runs = []
    for params in grid:
        for f in range(n_folds):
            train = mapped & (folds != f)
            test = np.flatnonzero(folds == f)
            try:
                model = make_estimator(task_type, algorithm, params, seed)
                y_train = y_all[train]
                if task_type == CLASSIFICATION:
                    y_train = y_train.astype(str)
                model.fit(X[row[train]], y_train)
                test_mapped = mapped[test]
                preds: list[Any] = [UNMAPPED] * test.shape[0]
                if test_mapped.any():
                    out = model.predict(X[row[test[test_mapped]]])
                    for i, p in zip(np.flatnonzero(test_mapped), out.tolist()):
                        preds[i] = p
                gold = [str(targets[i]) if task_type == CLASSIFICATION else float(targets[i]) for i in test]
                fallback = float(np.mean(y_all[train])) if task_type == REGRESSION else None
                metrics = tuple(
                    apply_scenario(task_type, m, gold, preds, test_mapped, fallback=fallback)
                    for m in METRICS[task_type]
                )
                runs.append(TaskRun(algorithm, params, f, OK, "", metrics, coverage))
            except (TaskError, ValueError, np.linalg.LinAlgError) as exc:
                runs.append(TaskRun(algorithm, params, f, FAILED, str(exc), (), coverage))
    return runs


def n_clusters_for(dataset: TabularDataset) -> int:
    return dataset.n_clusters or len(set(dataset.targets))


def run_clustering_task(
    dataset: TabularDataset,
    emb: EmbeddingSet,
    lookup: Mapping[DatasetEntity, int],
    algorithm: str,
    grid: Sequence[Mapping[str, Any]] | None = None,
    seed: int = 0,
) -> list[TaskRun]:
    """One run per hyperparameter assignment (fold 0); clusters the mapped entities."""
    grid = [dict(p) for p in (grid if grid is not None else default_grid(CLUSTERING, algorithm))]
    X, mapped = features(dataset.entities, lookup, emb)
    n_mapped = int(mapped.sum())
    coverage = n_mapped / len(dataset.entities) if dataset.entities else 0.0
    k = n_clusters_for(dataset)
    if n_mapped == 0:
        return _skipped(algorithm, grid, 1, "no mapped entities", coverage)
    gold = [str(t) for t in dataset.targets]
    runs = []
    for params in grid:
        est_params = dict(params)
        if algorithm in ("KMeans", "Agglomerative"):
            est_params.setdefault("n_clusters", k)
            if est_params["n_clusters"] > n_mapped:
                reason = f"{n_mapped} mapped entities for {est_params['n_clusters']} clusters"
                runs.append(TaskRun(algorithm, params, 0, SKIPPED, reason, (), coverage))
                continue
        try:
            labels = make_estimator(CLUSTERING, algorithm, est_params, seed).fit(X).labels_
        except (TaskError, ValueError) as exc:
            runs.append(TaskRun(algorithm, params, 0, FAILED, str(exc), (), coverage))
            continue
        preds = np.full(len(gold), -1, dtype=np.int64)
        preds[mapped] = labels
        metrics = tuple(apply_scenario(CLUSTERING, m, gold, preds.tolist(), mapped) for m in METRICS[CLUSTERING])
        runs.append(TaskRun(algorithm, params, 0, OK, "", metrics, coverage))
    return runs
