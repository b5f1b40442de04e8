import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgeval.ann import HNSWIndex
from kgeval.datasets import (
    CLASSIFICATION,
    REGRESSION,
    AnalogyDataset,
    DocSimDataset,
    RatingsDataset,
    RelatednessDataset,
    TabularDataset,
)
from kgeval.mapping import DatasetEntity, EntityMapping, Match
from kgeval.tasks.algorithms import TaskError
from kgeval.tasks.common import FAILED, OK, SKIPPED, entity_lookup
from kgeval.tasks.ml import make_folds, run_clustering_task, run_supervised_task
from kgeval.tasks.semantic import (
    doc_similarity,
    entity_relatedness,
    recommend,
    run_semantic_task,
    semantic_analogy,
    split_ratings,
)
from kgeval.vectors import EmbeddingSet


def ents(n, prefix="e"):
    return [DatasetEntity(f"{prefix}{i}") for i in range(n)]


def emb_of(vectors):
    vectors = np.asarray(vectors, dtype=np.float32)
    return EmbeddingSet(np.arange(len(vectors)), vectors, "test")


def identity_lookup(entities, mapped=None):
    return {e: i for i, e in enumerate(entities) if mapped is None or mapped[i]}


def separable(n_per=20, seed=0):
    rng = np.random.default_rng(seed)
    angles = np.concatenate([rng.uniform(0.1, 0.5, n_per), rng.uniform(2.0, 2.4, n_per)])
    X = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    y = ["a"] * n_per + ["b"] * n_per
    return X, y


# -- folds ------------------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 1000), st.integers(2, 10), st.integers(10, 60), st.booleans())
def test_folds_partition_mapped_entities(seed, k, n, stratify):
    rng = np.random.default_rng(seed)
    mapped = rng.random(n) < 0.7
    targets = rng.integers(0, 3, n).tolist()
    folds = make_folds(targets, mapped, k, seed, stratify)
    assert folds.min() >= 0 and folds.max() < k
    sizes = np.bincount(folds[mapped], minlength=k)
    assert sizes.max() - sizes.min() <= 1 if not stratify else sizes.sum() == mapped.sum()
    again = make_folds(targets, mapped, k, seed, stratify)
    np.testing.assert_array_equal(folds, again)


# -- supervised -----------------------------------------------------------------------


def test_full_coverage_known_equals_all():
    X, y = separable()
    entities = ents(len(y))
    ds = TabularDataset("s", CLASSIFICATION, entities, y)
    runs = run_supervised_task(CLASSIFICATION, ds, emb_of(X), identity_lookup(entities), "KNN", [{"k": 1}])
    assert len(runs) == 10 and all(r.status == OK for r in runs)
    for r in runs:
        (m,) = r.metrics
        assert m.value_known == m.value_all == 1.0
        assert m.coverage == 1.0


def test_zero_mapped_is_skipped_with_zero_coverage():
    entities = ents(20)
    ds = TabularDataset("s", CLASSIFICATION, entities, ["a", "b"] * 10)
    runs = run_supervised_task(CLASSIFICATION, ds, emb_of(np.ones((20, 2))), {}, "NaiveBayes")
    assert len(runs) == 10
    assert all(r.status == SKIPPED and r.coverage == 0.0 and not r.metrics for r in runs)


def test_half_coverage_perfect_classifier():
    X, y = separable(20)
    # duplicate the dataset; the copies are unmapped
    entities = ents(40) + ents(40, "u")
    ds = TabularDataset("s", CLASSIFICATION, entities, y + y)
    emb = emb_of(np.concatenate([X, X]))
    lookup = identity_lookup(entities, [True] * 40 + [False] * 40)
    for algo, grid in (("KNN", [{"k": 1}]), ("NaiveBayes", [{}]), ("SVM", [{"learning_rate": 0.1, "epochs": 100}])):
        for r in run_supervised_task(CLASSIFICATION, ds, emb, lookup, algo, grid):
            (m,) = r.metrics
            assert (m.value_known, m.value_all, m.coverage) == (1.0, 0.5, 0.5)
            assert m.value_all == m.value_known * m.coverage


def test_no_test_leakage():
    """Training rows never include any row of the fold being tested."""
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 4))
    y = [str(i % 3) for i in range(30)]
    entities = ents(30)
    ds = TabularDataset("s", CLASSIFICATION, entities, y)
    seen = []

    from kgeval.tasks import ml

    orig = ml.make_estimator

    def spy(*args, **kw):
        est = orig(*args, **kw)
        fit = est.fit

        def fit_spy(Xtr, ytr):
            seen.append({tuple(r) for r in Xtr.round(6)})
            return fit(Xtr, ytr)

        est.fit = fit_spy
        return est

    ml.make_estimator = spy
    try:
        run_supervised_task(CLASSIFICATION, ds, emb_of(X), identity_lookup(entities), "KNN", [{"k": 1}], n_folds=5)
    finally:
        ml.make_estimator = orig
    folds = make_folds(y, np.ones(30, bool), 5, 0, True)
    for f, train_rows in enumerate(seen):
        test_rows = {tuple(r) for r in emb_of(X).vectors.astype(float)[folds == f].round(6)}
        assert not train_rows & test_rows


def test_regression_unmapped_predict_train_mean():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(20, 3))
    y = (X @ np.array([1.0, -2.0, 0.5]) + 3).tolist()
    entities = ents(20) + ents(10, "u")
    ds = TabularDataset("r", REGRESSION, entities, y + [0.0] * 10)
    emb = emb_of(np.concatenate([X, np.zeros((10, 3))]))
    lookup = identity_lookup(entities, [True] * 20 + [False] * 10)
    runs = run_supervised_task(REGRESSION, ds, emb, lookup, "LinearRegression", n_folds=5)
    mapped = np.array([True] * 20 + [False] * 10)
    folds = make_folds(ds.targets, mapped, 5, 0, False)
    y_arr = np.array(ds.targets)
    for f, r in enumerate(runs):
        (m,) = r.metrics
        assert m.value_known < 1e-4  # float32 features, exact linear target
        train_mean = y_arr[mapped & (folds != f)].mean()
        test = folds == f
        # unmapped gold is 0 and their prediction is the train mean
        expected = np.sqrt((~mapped[test]).sum() * train_mean**2 / test.sum())
        assert m.value_all == pytest.approx(expected, abs=1e-4)


def test_single_class_training_fold_fails_in_isolation():
    entities = ents(10)
    ds = TabularDataset("s", CLASSIFICATION, entities, ["a"] * 9 + ["b"])
    runs = run_supervised_task(CLASSIFICATION, ds, emb_of(np.eye(10)), identity_lookup(entities), "NaiveBayes", n_folds=10)
    statuses = [r.status for r in runs]
    assert statuses.count(FAILED) == 1 and statuses.count(OK) == 9


# -- clustering ---------------------------------------------------------------------


def test_clustering_run_and_unmapped_penalty():
    rng = np.random.default_rng(0)
    X = np.concatenate([rng.normal((5, 0), 0.1, (10, 2)), rng.normal((0, 5), 0.1, (10, 2))])
    gold = ["x"] * 10 + ["y"] * 10
    entities = ents(20)
    ds = TabularDataset("c", "clustering", entities, gold)
    full = run_clustering_task(ds, emb_of(X), identity_lookup(entities), "KMeans")
    assert [m.value_all for m in full[0].metrics] == [1.0, 1.0, 1.0]
    half = identity_lookup(entities, [i % 2 == 0 for i in range(20)])
    (run,) = run_clustering_task(ds, emb_of(X), half, "Agglomerative")
    ari_m, nmi_m, acc_m = run.metrics
    assert acc_m.value_known == 1.0 and acc_m.value_all == 0.5
    assert ari_m.value_known == 1.0 and ari_m.value_all < 1.0
    dbscan = run_clustering_task(ds, emb_of(X), identity_lookup(entities), "DBSCAN")
    assert len(dbscan) == 3 and dbscan[0].params == {"eps": 0.3, "min_samples": 5}


def test_too_many_clusters_is_skipped():
    entities = ents(4)
    ds = TabularDataset("c", "clustering", entities, ["a", "b", "c", "d"])
    (run,) = run_clustering_task(ds, emb_of(np.eye(4)), identity_lookup(entities, [1, 1, 0, 0]), "KMeans")
    assert run.status == SKIPPED


# -- document similarity -----------------------------------------------------------------


def docsim_fixture():
    e = ents(4)
    docs = {"d1": [e[0], e[1]], "d2": [e[1], e[0]], "d3": [e[2]], "d4": [e[3]]}
    gold = [("d1", "d2", 1.0), ("d1", "d3", 0.2), ("d2", "d4", 0.1), ("d3", "d4", 0.5)]
    return e, DocSimDataset("lp", docs, gold)


def test_identical_documents_similarity_one():
    e, ds = docsim_fixture()
    vecs = np.random.default_rng(0).normal(size=(4, 5))
    pred, _ = doc_similarity(ds, emb_of(vecs), identity_lookup(e))
    assert pred[0] == pytest.approx(1.0)


def test_docsim_affine_predictions_give_perfect_correlation():
    e, ds = docsim_fixture()
    vecs = np.random.default_rng(1).normal(size=(4, 5))
    pred, _ = doc_similarity(ds, emb_of(vecs), identity_lookup(e))
    ds.gold = [(a, b, 3 * p + 1) for (a, b, _), p in zip(ds.gold, pred)]
    _, metrics = doc_similarity(ds, emb_of(vecs), identity_lookup(e))
    for m in metrics:
        assert m.value_all == pytest.approx(1.0) and m.value_known == pytest.approx(1.0)


def test_docsim_unmapped_document_scores_zero_or_drops():
    e, ds = docsim_fixture()
    vecs = np.random.default_rng(1).normal(size=(4, 5))
    pred, metrics = doc_similarity(ds, emb_of(vecs), identity_lookup(e, [1, 1, 1, 0]))
    assert pred[2] == 0.0 and pred[3] == 0.0
    with pytest.raises(TaskError):
        doc_similarity(DocSimDataset("x", {"d": e}, []), emb_of(vecs), {})


# -- relatedness ------------------------------------------------------------------------


def relatedness_fixture(order):
    """Seed at angle 0, candidates at increasing angles; ``order`` gives gold rank positions."""
    seed = DatasetEntity("seed")
    cands = ents(4, "c")
    angles = np.array([0.0, 0.1, 0.2, 0.3, 0.4])
    vecs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    lookup = {seed: 0, **{c: i + 1 for i, c in enumerate(cands)}}
    ds = RelatednessDataset("kore", [(seed, [cands[i] for i in order])])
    return ds, emb_of(vecs), lookup, cands


@pytest.mark.parametrize("order, tau", [([0, 1, 2, 3], 1.0), ([3, 2, 1, 0], -1.0), ([0, 1, 3, 2], 2 / 3)])
def test_relatedness_examples(order, tau):
    ds, emb, lookup, _ = relatedness_fixture(order)
    (m,) = entity_relatedness(ds, emb, lookup)
    assert m.value_known == pytest.approx(tau) and m.value_all == pytest.approx(tau)


def test_relatedness_unmapped_rules():
    ds, emb, lookup, cands = relatedness_fixture([0, 1, 2, 3])
    del lookup[cands[0]]
    (m,) = entity_relatedness(ds, emb, lookup)
    assert m.value_known == pytest.approx(1.0)
    assert m.value_all < 1.0
    del lookup[ds.seeds[0][0]]
    (m,) = entity_relatedness(ds, emb, lookup)
    assert np.isnan(m.value_known) and m.value_all == 0.0


# -- analogies --------------------------------------------------------------------------


def analogy_fixture(n_entities=500, n_quads=50, seed=0, dim=32):
    rng = np.random.default_rng(seed)
    vecs = rng.normal(size=(n_entities, dim))
    quads = []
    ids = rng.permutation(n_entities)
    for i in range(n_quads):
        a, b, c, d = ids[4 * i : 4 * i + 4]
        vecs[d] = vecs[b] - vecs[a] + vecs[c]
        quads.append((a, b, c, d))
    entities = ents(n_entities)
    ds = AnalogyDataset("cap", [tuple(entities[x] for x in q) for q in quads])
    return ds, vecs, entities


def test_analogy_exact_offsets_exact_and_ann():
    ds, vecs, entities = analogy_fixture()
    emb = emb_of(vecs)
    lookup = identity_lookup(entities)
    (exact,) = semantic_analogy(ds, emb, lookup, index="exact")
    index = HNSWIndex(M=16, ef_construction=200).fit(emb.vectors, emb.ids)
    (ann,) = semantic_analogy(ds, emb, lookup, index=index)
    assert exact.value_all == exact.value_known == 1.0
    assert ann.value_all == ann.value_known == 1.0


def test_analogy_accounting_one_unmapped_of_four():
    ds, vecs, entities = analogy_fixture(40, 4)
    lookup = identity_lookup(entities)
    del lookup[ds.quadruples[2][1]]
    (m,) = semantic_analogy(ds, emb_of(vecs), lookup)
    assert (m.value_known, m.value_all) == (1.0, 0.75)


def test_analogy_with_a_equal_b_is_nearest_neighbour_of_c():
    rng = np.random.default_rng(3)
    vecs = rng.normal(size=(30, 6))
    vecs[1] = vecs[0]
    entities = ents(30)
    ds = AnalogyDataset("x", [(entities[0], entities[1], entities[2], entities[5])])
    (m,) = semantic_analogy(ds, emb_of(vecs), identity_lookup(entities))
    from kgeval.vectors import cosine_matrix

    sims = cosine_matrix(vecs[2:3], vecs)[0]
    sims[[0, 1, 2]] = -np.inf
    assert m.value_all == float(np.argmax(sims) == 5)


def test_analogy_invariant_to_constant_shift():
    ds, vecs, entities = analogy_fixture(200, 20, seed=4)
    lookup = identity_lookup(entities)
    (a,) = semantic_analogy(ds, emb_of(vecs), lookup)
    (b,) = semantic_analogy(ds, emb_of(vecs + 0.7), lookup)
    assert a.value_all == b.value_all == 1.0


# -- recommendation -----------------------------------------------------------------------


def test_recommend_constructed_top_k():
    # items 0-9 in one direction, 10-19 orthogonal; user liked 12 items of the first group
    rng = np.random.default_rng(0)
    items = ents(20, "i")
    base = np.zeros((20, 4))
    base[:10, 0] = 1
    base[10:, 1] = 1
    vecs = base + rng.normal(scale=0.01, size=base.shape)
    ratings = [("u", items[i], 5.0) for i in range(10)]
    ds = RatingsDataset("ml", ratings, 4.0, k=2, items=items)
    (train, test), = split_ratings(ds, seed=0).values()
    assert len(test) == 2 and not set(train) & set(test)
    (m,) = recommend(ds, emb_of(vecs), identity_lookup(items), k=2)
    assert m.value_all == 1.0 == m.value_known
    with pytest.raises(TaskError):
        recommend(ds, emb_of(vecs), identity_lookup(items), k=0)


def test_recommend_mean_over_users():
    # items 0-3 share a direction; items 4-7 are mutually orthogonal and orthogonal to it
    items = ents(8, "i")
    vecs = np.zeros((8, 5))
    vecs[:4, 0] = 1
    vecs[4:, 1:] = np.eye(4)
    ratings = [("good", items[i], 5.0) for i in range(4)] + [("bad", items[i], 5.0) for i in range(4, 8)]
    ds = RatingsDataset("ml", ratings, 4.0, k=2, test_ratio=0.5, items=items)
    (m,) = recommend(ds, emb_of(vecs), identity_lookup(items), k=2)
    # good: both held-out items score 1, F1 = 1; bad: every candidate scores 0 and
    # the tie goes to items 0 and 1, F1 = 0
    assert m.value_all == 0.5 == m.value_known


def test_recommend_unmapped_profile_and_test_items():
    items = ents(6, "i")
    vecs = np.eye(6)
    ratings = [("u", items[i], 5.0) for i in range(6)]
    ds = RatingsDataset("ml", ratings, 4.0, k=3, test_ratio=0.5, items=items)
    (m,) = recommend(ds, emb_of(vecs), {}, k=3)
    assert m.value_all == 0.0 and np.isnan(m.value_known)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 100), st.integers(0, 100))
def test_semantic_tasks_are_scale_invariant(scale, seed):
    rng = np.random.default_rng(seed)
    vecs = rng.normal(size=(12, 4))
    e = ents(12)
    lookup = identity_lookup(e, rng.random(12) < 0.8)
    docs = DocSimDataset("d", {"a": e[:3], "b": e[3:6], "c": e[6:9]}, [("a", "b", 0.1), ("a", "c", 0.9), ("b", "c", 0.4)])
    rel = RelatednessDataset("r", [(e[0], e[1:6]), (e[6], e[7:12])])
    ana = AnalogyDataset("q", [tuple(e[i : i + 4]) for i in range(0, 12, 4)])
    rat = RatingsDataset("m", [(u, e[i], 5.0) for u in "xy" for i in rng.choice(12, 5, replace=False)], 4.0, k=3)
    for ds, t in ((docs, "document_similarity"), (rel, "entity_relatedness"), (ana, "semantic_analogies"), (rat, "recommendation")):
        a = run_semantic_task(t, ds, emb_of(vecs), lookup)
        b = run_semantic_task(t, ds, emb_of(vecs * scale), lookup)
        for ra, rb in zip(a, b):
            for ma, mb in zip(ra.metrics, rb.metrics):
                np.testing.assert_allclose([ma.value_known, ma.value_all], [mb.value_known, mb.value_all], atol=1e-5)


def test_entity_lookup_respects_embedding():
    pool = ents(3)
    mapping = EntityMapping({0: Match(5, 1.0, "uri"), 2: Match(1, 1.0, "label")})
    emb = EmbeddingSet(np.array([1, 2]), np.ones((2, 2)), "t")
    assert entity_lookup(pool, mapping) == {pool[0]: 5, pool[2]: 1}
    assert entity_lookup(pool, mapping, emb) == {pool[2]: 1}
