"""Distance-based tasks: document similarity, entity relatedness, analogies, recommendation.

Each task scores both scenarios. "known" drops anything that touches an
unmapped entity; "all" keeps it and applies the task's penalty.
"""

from __future__ import annotations

import logging
from typing import Mapping, Sequence

import numpy as np

from ..ann import BRUTE_FORCE_LIMIT, knn, neighbor_index
from ..datasets import (
    DOCUMENT_SIMILARITY,
    ENTITY_RELATEDNESS,
    RECOMMENDATION,
    SEMANTIC_ANALOGIES,
    AnalogyDataset,
    DocSimDataset,
    RatingsDataset,
    RelatednessDataset,
)
from ..mapping import DatasetEntity
from ..metrics import (
    DIRECTIONS,
    ScenarioMetrics,
    f1_at_k,
    harmonic_mean,
    kendall_tau_b,
    pearson,
    spearman,
)
from ..vectors import EmbeddingSet, cosine_matrix
from .algorithms import TaskError
from .common import OK, SKIPPED, TaskRun

logger = logging.getLogger(__name__)

NAN = float("nan")
ANALOGY_EF_SEARCH = 200

ALGORITHMS = {
    DOCUMENT_SIMILARITY: "CosineSimilarity",
    ENTITY_RELATEDNESS: "CosineSimilarity",
    SEMANTIC_ANALOGIES: "CosineSimilarity",
    RECOMMENDATION: "ItemSimilarity",
}
METRICS = {
    DOCUMENT_SIMILARITY: ("spearman", "pearson", "harmonic_mean"),
    ENTITY_RELATEDNESS: ("kendall_tau",),
    SEMANTIC_ANALOGIES: ("accuracy",),
    RECOMMENDATION: ("f1",),
}


def _coverage(entities, lookup) -> float:
    distinct = set(entities)
    return sum(e in lookup for e in distinct) / len(distinct) if distinct else 0.0


def _metric(name: str, known: float, all_: float, coverage: float) -> ScenarioMetrics:
    return ScenarioMetrics(name, float(known), float(all_), coverage, DIRECTIONS[name])


def _vec(emb: EmbeddingSet, lookup: Mapping[DatasetEntity, int], e: DatasetEntity) -> np.ndarray:
    return emb.vector(lookup[e]).astype(np.float64)


# -- document similarity ---------------------------------------------------------


def _correlations(pred: Sequence[float], gold: Sequence[float]) -> tuple[float, float, float]:
    if len(pred) < 2:
        return NAN, NAN, NAN
    s, p = spearman(gold, pred), pearson(gold, pred)
    return s, p, harmonic_mean(s, p)


def doc_similarity(ds: DocSimDataset, emb: EmbeddingSet, lookup: Mapping[DatasetEntity, int]):
    """Returns ``(predicted pair scores, metrics)``.

    A document vector is the mean of its mapped entities' vectors; a document
    with none scores 0 against everything ("all") or has its pairs dropped
    ("known").
    """
    if len(ds.documents) < 2:
        raise TaskError("document similarity needs at least two documents")
    doc_vec: dict[str, np.ndarray | None] = {}
    for doc, ents in ds.documents.items():
        vecs = [_vec(emb, lookup, e) for e in ents if e in lookup]
        doc_vec[doc] = np.mean(vecs, axis=0) if vecs else None
    pred, gold, known = [], [], []
    for a, b, score in ds.gold:
        va, vb = doc_vec[a], doc_vec[b]
        ok = va is not None and vb is not None
        pred.append(float(cosine_matrix(va[None], vb[None])[0, 0]) if ok else 0.0)
        gold.append(score)
        known.append(ok)
    known = np.array(known, dtype=bool)
    p_all = _correlations(pred, gold)
    p_known = _correlations([p for p, k in zip(pred, known) if k], [g for g, k in zip(gold, known) if k])
    cov = _coverage(ds.iter_entities(), lookup)
    metrics = tuple(_metric(m, k, a, cov) for m, k, a in zip(METRICS[DOCUMENT_SIMILARITY], p_known, p_all))
    return pred, metrics


# -- entity relatedness ----------------------------------------------------------


def entity_relatedness(ds: RelatednessDataset, emb: EmbeddingSet, lookup: Mapping[DatasetEntity, int]):
    """Mean Kendall tau-b per seed between gold ranks and cosine ranking.

    In "all", unmapped candidates tie below every mapped one and an unmapped
    seed contributes 0; in "known" both are dropped. Seeds left with fewer
    than two candidates are skipped.
    """
    taus_known, taus_all = [], []
    for seed, cands in ds.seeds:
        gold = -np.arange(1, len(cands) + 1, dtype=np.float64)  # higher = more related
        mapped = np.array([c in lookup for c in cands], dtype=bool)
        if seed in lookup:
            sv = _vec(emb, lookup, seed)[None]
            scores = np.full(len(cands), -2.0)  # below any cosine
            if mapped.any():
                cv = np.stack([_vec(emb, lookup, c) for c, m in zip(cands, mapped) if m])
                scores[mapped] = cosine_matrix(sv, cv)[0]
            if len(cands) >= 2:
                taus_all.append(kendall_tau_b(gold, scores))
            if mapped.sum() >= 2:
                taus_known.append(kendall_tau_b(gold[mapped], scores[mapped]))
        elif len(cands) >= 2:
            taus_all.append(0.0)
    cov = _coverage(ds.iter_entities(), lookup)
    mean = lambda xs: float(np.mean(xs)) if xs else NAN  # noqa: E731
    return (_metric("kendall_tau", mean(taus_known), mean(taus_all), cov),)


# -- semantic analogies ----------------------------------------------------------


def _analogy_exact(emb: EmbeddingSet, queries: np.ndarray, exclude: np.ndarray) -> np.ndarray:
    sims = cosine_matrix(queries, emb.vectors)
    rows = np.arange(queries.shape[0])[:, None]
    sims[rows, exclude] = -np.inf
    # argmax takes the first maximum, i.e. the lowest entity id among ties
    return emb.ids[np.argmax(sims, axis=1)]


def _analogy_ann(index, queries: np.ndarray, exclude: np.ndarray, ef_search: int) -> np.ndarray:
    out = np.empty(queries.shape[0], dtype=np.int64)
    for i, q in enumerate(queries):
        skip = set(exclude[i].tolist())
        k = 4
        while True:
            hits = [h for h, _ in knn(index, q, k, max(ef_search, k)) if h not in skip]
            if hits or k >= len(index.ids_):
                break
            k *= 2
        out[i] = hits[0] if hits else -1
    return out


def predict_analogies(emb: EmbeddingSet, quads_kg: np.ndarray, index=None, ef_search: int = ANALOGY_EF_SEARCH) -> np.ndarray:
    """Argmax-cosine answer for each row ``(a, b, c)`` of KG ids, excluding a, b, c."""
    quads_kg = np.asarray(quads_kg, dtype=np.int64).reshape(-1, 3)
    if quads_kg.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    pos = np.vectorize(emb.position, otypes=[np.int64])(quads_kg)
    v = emb.vectors.astype(np.float64)
    queries = v[pos[:, 1]] - v[pos[:, 0]] + v[pos[:, 2]]
    if index is None:
        return _analogy_exact(emb, queries, pos)
    return _analogy_ann(index, queries, quads_kg, ef_search)


def semantic_analogy(
    ds: AnalogyDataset,
    emb: EmbeddingSet,
    lookup: Mapping[DatasetEntity, int],
    index=None,
    ef_search: int = ANALOGY_EF_SEARCH,
):
    """Accuracy of ``argmax cos(x, b - a + c) == d``.

    ``index`` defaults to HNSW above the exact-search size limit; pass
    ``"exact"`` to force the exact scan.
    """
    if not ds.quadruples:
        raise TaskError("empty analogy dataset")
    full = [all(e in lookup for e in q) for q in ds.quadruples]
    quads = [q for q, ok in zip(ds.quadruples, full) if ok]
    if index is None:
        index = None if len(emb) <= BRUTE_FORCE_LIMIT else neighbor_index(emb)
    elif isinstance(index, str) and index == "exact":
        index = None
    abc = np.array([[lookup[e] for e in q[:3]] for q in quads], dtype=np.int64).reshape(-1, 3)
    pred = predict_analogies(emb, abc, index, ef_search)
    correct = [int(p) == lookup[q[3]] for p, q in zip(pred.tolist(), quads)]
    known = float(np.mean(correct)) if correct else NAN
    all_ = sum(correct) / len(ds.quadruples)
    return (_metric("accuracy", known, all_, _coverage(ds.iter_entities(), lookup)),)


# -- recommendation --------------------------------------------------------------


def split_ratings(ds: RatingsDataset, seed: int, test_ratio: float | None = None) -> dict[str, tuple[list[int], list[int]]]:
    """Per user, seeded shuffle of positive items into (train, test) item indices.

    The test share is ``round(ratio * n)`` clamped to [1, n - 1].
    """
    ratio = ds.test_ratio if test_ratio is None else test_ratio
    index = {item: i for i, item in enumerate(ds.items)}
    rng = np.random.default_rng(seed)
    split = {}
    for user, items in sorted(ds.by_user().items()):
        ids = np.array([index[i] for i in items], dtype=np.int64)
        ids = ids[rng.permutation(ids.shape[0])]
        n_test = min(max(1, int(round(ratio * ids.shape[0]))), ids.shape[0] - 1)
        split[user] = (sorted(ids[n_test:].tolist()), sorted(ids[:n_test].tolist()))
    return split


def recommend(ds: RatingsDataset, emb: EmbeddingSet, lookup: Mapping[DatasetEntity, int], k: int | None = None, seed: int = 0):
    """Mean F1@k of an item-similarity recommender over users.

    Candidates are mapped items outside the user's training profile, scored
    by mean cosine to the user's mapped training items; ties go to the lower
    item index.
    """
    k = ds.k if k is None else k
    if k <= 0:
        raise TaskError("recommendation k must be positive")
    mapped = np.array([item in lookup for item in ds.items], dtype=bool)
    mapped_idx = np.flatnonzero(mapped)
    pos_of = np.full(len(ds.items), -1, dtype=np.int64)
    pos_of[mapped_idx] = np.arange(mapped_idx.shape[0])
    if mapped_idx.size:
        vecs = np.stack([_vec(emb, lookup, ds.items[i]) for i in mapped_idx])
        sim = cosine_matrix(vecs, vecs)
    f1_known, f1_all = [], []
    for user, (train, test) in split_ratings(ds, seed).items():
        profile = [pos_of[i] for i in train if mapped[i]]
        test_mapped = [i for i in test if mapped[i]]
        if not profile:
            f1_all.append(0.0)
            continue
        scores = sim[:, profile].mean(axis=1)
        scores[[pos_of[i] for i in train if mapped[i]]] = -np.inf
        candidates = np.flatnonzero(np.isfinite(scores))
        order = candidates[np.lexsort((mapped_idx[candidates], -scores[candidates]))]
        topk = mapped_idx[order[:k]].tolist()
        f1_all.append(f1_at_k(topk, test, k))
        if test_mapped:
            f1_known.append(f1_at_k(topk, test_mapped, k))
    mean = lambda xs: float(np.mean(xs)) if xs else NAN  # noqa: E731
    return (_metric("f1", mean(f1_known), mean(f1_all), _coverage(ds.items, lookup)),)


# -- dispatch --------------------------------------------------------------------


def run_semantic_task(task_type: str, ds, emb: EmbeddingSet, lookup: Mapping[DatasetEntity, int], seed: int = 0, index=None,
                      ef_search: int = ANALOGY_EF_SEARCH) -> list[TaskRun]:
    algorithm = ALGORITHMS[task_type]
    if not any(e in lookup for e in ds.iter_entities()):
        return [TaskRun(algorithm, {}, 0, SKIPPED, "no mapped entities", (), 0.0)]
    if task_type == DOCUMENT_SIMILARITY:
        metrics = doc_similarity(ds, emb, lookup)[1]
    elif task_type == ENTITY_RELATEDNESS:
        metrics = entity_relatedness(ds, emb, lookup)
    elif task_type == SEMANTIC_ANALOGIES:
        metrics = semantic_analogy(ds, emb, lookup, index, ef_search)
    elif task_type == RECOMMENDATION:
        metrics = recommend(ds, emb, lookup, seed=seed)
    else:
        raise TaskError(f"{task_type} is not a similarity-based task type")
    return [TaskRun(algorithm, {}, 0, OK, "", tuple(metrics), metrics[0].coverage)]
