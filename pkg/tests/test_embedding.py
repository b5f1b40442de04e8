import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles

from kgeval.embedding import (
    COMPLEX,
    DISTMULT,
    MODEL_KINDS,
    RDF2VEC,
    TRANSE,
    CorpusError,
    KGEModel,
    RDF2Vec,
    TrainingError,
    UnsupportedOperation,
    WalkCorpus,
    export_embeddings,
    generate_walks,
    negative_corrupt,
    score_triple,
    train_embedding,
    train_epoch,
    train_skipgram,
)
from kgeval.embedding.kge import link_prediction_mrr, score_and_grads, triple_loss_and_grads
from kgeval.synthetic import chain_graph, graph_from_ids, planted_clusters
from kgeval.vectors import VectorFileError, cosine_matrix, load_vectors, save_vectors

EPS = 1e-5


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), 1e-8)


def fitted(kind, dim, ent, rel):
    model = KGEModel(kind=kind, dim=dim)
    model.entity_embeddings_ = np.asarray(ent, dtype=float)
    model.relation_embeddings_ = np.asarray(rel, dtype=float)
    return model


def test_score_examples():
    zero = np.zeros((1, 4))
    assert score_triple(fitted(TRANSE, 4, zero, zero), 0, 0, 0) == 0.0
    onehot = np.eye(4)[[2]]
    assert score_triple(fitted(DISTMULT, 4, onehot, onehot), 0, 0, 0) == 1.0
    cplx = np.concatenate([onehot, np.zeros((1, 4))], axis=1)
    assert score_triple(fitted(COMPLEX, 4, cplx, cplx), 0, 0, 0) == 1.0


def test_rdf2vec_has_no_triple_score():
    with pytest.raises(UnsupportedOperation):
        score_triple(RDF2Vec(), 0, 0, 0)


@pytest.mark.parametrize("kind", [TRANSE, DISTMULT, COMPLEX])
@pytest.mark.parametrize("seed", range(5))
def test_score_gradient_matches_finite_differences(kind, seed):
    rng = np.random.default_rng(seed)
    h, r, t = rng.normal(size=(3, 8))
    _, *grads = score_and_grads(kind, h, r, t)
    args = [h, r, t]
    for which, grad in enumerate(grads):
        for i in range(8):
            up = [a.copy() for a in args]
            down = [a.copy() for a in args]
            up[which][i] += EPS
            down[which][i] -= EPS
            num = (score_and_grads(kind, *up)[0] - score_and_grads(kind, *down)[0]) / (2 * EPS)
            assert rel_err(grad[i], num) < 1e-4


@pytest.mark.parametrize("kind", [TRANSE, DISTMULT, COMPLEX])
def test_loss_gradient_matches_finite_differences(kind):
    rng = np.random.default_rng(7)
    width = 8
    ent = rng.normal(size=(6, width))
    rel = rng.normal(size=(2, width))
    pos = np.array([[0, 0, 1], [2, 1, 3]])
    neg = np.array([[[4, 0, 1], [0, 0, 5]], [[2, 1, 0], [5, 1, 3]]])
    margin = 5.0  # keeps every hinge active, away from the kink
    loss, e_ids, g_e, r_ids, g_r = triple_loss_and_grads(kind, ent, rel, pos, neg, margin, 0.01)
    dense_e = np.zeros_like(ent)
    dense_e[e_ids] = g_e
    dense_r = np.zeros_like(rel)
    dense_r[r_ids] = g_r

    def total(e, r):
        return triple_loss_and_grads(kind, e, r, pos, neg, margin, 0.01)[0].sum()

    for mat, dense in ((ent, dense_e), (rel, dense_r)):
        for idx in np.ndindex(mat.shape):
            old = mat[idx]
            mat[idx] = old + EPS
            plus = total(ent, rel)
            mat[idx] = old - EPS
            minus = total(ent, rel)
            mat[idx] = old
            num = (plus - minus) / (2 * EPS)
            assert abs(dense[idx] - num) < 1e-4 * max(abs(num), 1.0)


def test_negative_corrupt_examples():
    rng = np.random.default_rng(0)
    for row in negative_corrupt((0, 0, 1), rng, 20, 2):
        assert row in {(0, 0, 0), (1, 0, 1)}
    out = negative_corrupt((3, 1, 4), np.random.default_rng(1), 5, 10)
    assert len(out) == 5 and (3, 1, 4) not in out
    again = negative_corrupt((3, 1, 4), np.random.default_rng(1), 5, 10)
    assert out == again
    with pytest.raises(ValueError):
        negative_corrupt((0, 0, 0), rng, 1, 1)
    with pytest.raises(ValueError):
        negative_corrupt((0, 0, 1), rng, 0, 5)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 50), st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_corruption_changes_exactly_one_end(n_entities, n, seed):
    rng = np.random.default_rng(seed)
    triple = (int(rng.integers(n_entities)), 0, int(rng.integers(n_entities)))
    for h, r, t in negative_corrupt(triple, rng, n, n_entities):
        assert r == 0 and (h, r, t) != triple
        assert (h != triple[0]) + (t != triple[2]) == 1
        assert 0 <= h < n_entities and 0 <= t < n_entities


def test_empty_epoch_is_a_no_op():
    g = graph_from_ids(np.zeros((0, 3)), 3, 1)
    model = KGEModel(dim=4).initialize(3, 1, np.random.default_rng(0))
    before = model.entity_embeddings_.copy()
    assert train_epoch(model, g, np.random.default_rng(0)) == 0.0
    np.testing.assert_array_equal(before, model.entity_embeddings_)


@pytest.mark.parametrize("kind", [TRANSE, DISTMULT, COMPLEX])
def test_zero_learning_rate_keeps_parameters(kind):
    model = KGEModel(kind=kind, dim=4, learning_rate=0.0, negatives=3)
    model.initialize(5, 1, np.random.default_rng(0))
    ent, rel = model.entity_embeddings_.copy(), model.relation_embeddings_.copy()
    triples = np.array([[0, 0, 1]])
    first = train_epoch(model, triples, np.random.default_rng(3))
    second = train_epoch(model, triples, np.random.default_rng(3))
    assert first == second
    np.testing.assert_array_equal(ent, model.entity_embeddings_)
    np.testing.assert_array_equal(rel, model.relation_embeddings_)


def test_chain_graph_loss_decreases():
    model = KGEModel(kind=TRANSE, dim=16, epochs=50, batch_size=8, negatives=5).fit(chain_graph(20))
    assert len(model.loss_history_) == 50
    assert model.loss_history_[-1] < model.loss_history_[0]


def test_transe_rows_stay_unit_norm():
    g, _ = planted_clusters(2, 20, 4, 20)
    model = KGEModel(kind=TRANSE, dim=8, epochs=0).fit(g)
    rng = np.random.default_rng(0)
    for _ in range(3):
        train_epoch(model, g, rng)
        norms = np.linalg.norm(model.entity_embeddings_, axis=1)
        assert np.all(np.abs(norms - 1) <= 1e-6)


def test_divergence_raises():
    g, _ = planted_clusters(2, 20, 4, 20)
    model = KGEModel(kind=DISTMULT, dim=8, epochs=20, learning_rate=1e6, regularization=0.0)
    with pytest.raises(TrainingError, match="learning rate"):
        model.fit(g)


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_same_seed_gives_identical_vectors(kind):
    g, _ = planted_clusters(2, 20, 4, 20)
    params = {"dim": 8, "epochs": 2}
    if kind == RDF2VEC:
        params["walks_per_entity"] = 5
    a = train_embedding(kind, g, params)
    b = train_embedding(kind, g, params)
    assert a.vectors.tobytes() == b.vectors.tobytes()
    assert a.config_hash == b.config_hash and a.kind == kind
    assert len(a) == g.n_entities


def test_hogwild_mode_trains():
    g, _ = planted_clusters(2, 20, 4, 20)
    model = KGEModel(kind=DISTMULT, dim=8, epochs=3, batch_size=16, n_threads=2).fit(g)
    assert np.isfinite(model.entity_embeddings_).all()


@pytest.mark.slow
@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_planted_clusters_are_recovered(kind):
    g, labels = planted_clusters(4, 40, 4, 80, seed=1)
    params = {"dim": 32, "epochs": 30, "batch_size": 64, "learning_rate": 0.05, "negatives": 5}
    if kind == RDF2VEC:
        params = {"dim": 32, "walks_per_entity": 20, "depth": 4, "epochs": 5}
    emb = train_embedding(kind, g, params)
    sim = cosine_matrix(emb.vectors, emb.vectors)
    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(len(labels), dtype=bool)
    assert sim[same & off_diag].mean() > sim[~same].mean()


def test_walk_examples():
    g = graph_from_ids([(0, 0, 1), (1, 1, 2)], 4, 2)
    corpus = generate_walks(g, 3, 2, np.random.default_rng(0))
    walks = list(corpus)
    assert [0, 4, 1, 5, 2] in walks and walks.count([0, 4, 1, 5, 2]) == 1
    assert [2] in walks and [3] in walks
    again = generate_walks(g, 3, 2, np.random.default_rng(0))
    assert list(again) == walks
    with pytest.raises(ValueError):
        generate_walks(g, 3, 0, np.random.default_rng(0))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_walks_follow_out_edges(seed, depth):
    rng = np.random.default_rng(seed)
    n = 15
    triples = np.unique(np.stack([rng.integers(0, n, 30), rng.integers(0, 3, 30), rng.integers(0, n, 30)], 1), axis=0)
    g = graph_from_ids(triples, n, 3)
    edges = {tuple(t) for t in triples.tolist()}
    corpus = generate_walks(g, 4, depth, rng)
    starts = set()
    for walk in corpus:
        assert 1 <= len(walk) <= 2 * depth + 1 and len(walk) % 2 == 1
        starts.add(walk[0])
        for i in range(1, len(walk), 2):
            assert (walk[i - 1], walk[i] - n, walk[i + 1]) in edges
    assert starts == set(range(n))


def test_skipgram_cooccurrence_ordering():
    # walk-shaped: entity, relation token, entity
    walks = [[a, r, b] for a, r, b in ((0, 6, 1), (1, 6, 0), (2, 7, 3), (3, 7, 2), (4, 8, 5), (5, 8, 4))] * 100
    for seed in range(3):
        emb = train_skipgram(walks, 16, 2, 3, 20, 0.05, np.random.default_rng(seed))
        sim = cosine_matrix(emb.vectors, emb.vectors)
        assert sim[0, 1] > sim[0, 2]


@pytest.mark.parametrize("lr, epochs", [(0.0, 3), (0.05, 0)])
def test_skipgram_without_updates_returns_initialisation(lr, epochs):
    walks = [[0, 1, 2]]
    emb = train_skipgram(walks, 4, 1, 2, epochs, lr, np.random.default_rng(5))
    init = (np.random.default_rng(5).random((3, 4)) - 0.5) / 4
    np.testing.assert_array_equal(emb.vectors, init.astype(np.float32))


def test_skipgram_single_token_corpus_fails():
    with pytest.raises(CorpusError):
        train_skipgram([[0, 0, 0]], 4, 1, 2, 1, 0.05, np.random.default_rng(0))
    with pytest.raises(CorpusError):
        train_skipgram(WalkCorpus.from_sequences([]), 4, 1, 2, 1, 0.05, np.random.default_rng(0))


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_export_round_trip_is_bitwise(kind, tmp_path):
    g = chain_graph(6)
    params = {"dim": 3, "epochs": 1}
    if kind == RDF2VEC:
        params["walks_per_entity"] = 2
    emb = train_embedding(kind, g, params)
    assert emb.dim == (6 if kind == COMPLEX else 3)
    save_vectors(emb, tmp_path / "v.bin")
    back = load_vectors(tmp_path / "v.bin")
    assert back.vectors.tobytes() == emb.vectors.tobytes()
    assert back.ids.tolist() == emb.ids.tolist()
    assert (back.kind, back.config_hash) == (emb.kind, emb.config_hash)


def test_truncated_vector_file(tmp_path):
    emb = export_embeddings(KGEModel(dim=2, epochs=0).fit(chain_graph(3)))
    path = tmp_path / "v.bin"
    save_vectors(emb, path)
    data = path.read_bytes()
    record = 8 + 4 * 2
    path.write_bytes(data[:-record])
    with pytest.raises(VectorFileError, match="truncated"):
        load_vectors(path)
    path.write_bytes(data + b"\0" * 4)
    with pytest.raises(VectorFileError, match="trailing"):
        load_vectors(path)
    path.write_bytes(b"XXXXX" + data[5:])
    with pytest.raises(VectorFileError, match="magic"):
        load_vectors(path)


@pytest.mark.parametrize("kind", [TRANSE, DISTMULT, COMPLEX])
def test_link_prediction_mrr_matches_loop_oracle(kind):
    rng = np.random.default_rng(3)
    model = fitted(kind, 4, rng.normal(size=(12, 8 if kind == COMPLEX else 4)),
                   rng.normal(size=(2, 8 if kind == COMPLEX else 4)))
    known = rng.integers(0, [12, 2, 12], size=(30, 3))
    test = known[:6]
    mrr, _ = link_prediction_mrr(model, test, known)

    def score(h, r, t):
        return float(model.score_triples(h, r, t))

    assert mrr == pytest.approx(oracles.filtered_mrr(score, 12, test.tolist(), known.tolist()), abs=1e-12)


def test_link_prediction_constant_scorer_hits_baseline():
    model = fitted(DISTMULT, 3, np.zeros((10, 3)), np.zeros((1, 3)))
    mrr, base = link_prediction_mrr(model, [(0, 0, 1), (2, 0, 3)], [(0, 0, 1), (0, 0, 4), (2, 0, 3)])
    # ties count half, so a constant scorer gets 2 / (m + 1) per query; H_m / m lies close to that
    assert mrr == pytest.approx(np.mean([2 / 10, 2 / 11, 2 / 11, 2 / 11]))
    assert base == pytest.approx(np.mean([sum(1 / np.arange(1, m + 1)) / m for m in (9, 10, 10, 10)]))
    with pytest.raises(ValueError):
        link_prediction_mrr(model, [], [])
