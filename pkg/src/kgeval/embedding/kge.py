"""Translational and bilinear knowledge graph embeddings trained with plain SGD.

Score functions (higher is more plausible)::

    TransE    -||h + r - t||_2
    DistMult  sum_i h_i r_i t_i
    ComplEx   Re(sum_i h_i r_i conj(t_i))

ComplEx vectors of complex dimension ``d`` are stored as ``2d`` reals laid out
as ``[real | imaginary]``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..graph import KnowledgeGraph
from ..vectors import EmbeddingSet, config_hash

logger = logging.getLogger(__name__)

TRANSE = "TransE"
DISTMULT = "DistMult"
COMPLEX = "ComplEx"
RDF2VEC = "RDF2vec"
KGE_KINDS = (TRANSE, DISTMULT, COMPLEX)


class TrainingError(RuntimeError):
    pass


class UnsupportedOperation(TypeError):
    pass


def score_and_grads(kind: str, h: np.ndarray, r: np.ndarray, t: np.ndarray):
    """Scores and their gradients w.r.t. ``h``, ``r`` and ``t``.

    Inputs broadcast over leading axes; the last axis is the vector axis.
    """
    if kind == TRANSE:
        u = h + r - t
        norm = np.linalg.norm(u, axis=-1, keepdims=True)
        unit = np.divide(u, norm, out=np.zeros_like(u), where=norm > 0)
        return -norm[..., 0], -unit, -unit, unit
    if kind == DISTMULT:
        return (h * r * t).sum(-1), r * t, h * t, h * r
    if kind == COMPLEX:
        d = h.shape[-1] // 2
        a, b = h[..., :d], h[..., d:]
        c, e_ = r[..., :d], r[..., d:]
        x, y = t[..., :d], t[..., d:]
        score = (a * c * x - b * e_ * x + a * e_ * y + b * c * y).sum(-1)
        gh = np.concatenate([c * x + e_ * y, -e_ * x + c * y], axis=-1)
        gr = np.concatenate([a * x + b * y, -b * x + a * y], axis=-1)
        gt = np.concatenate([a * c - b * e_, a * e_ + b * c], axis=-1)
        return score, gh, gr, gt
    raise UnsupportedOperation(f"no triple score for model kind {kind!r}")


def margin_loss(s_pos: np.ndarray, s_neg: np.ndarray, margin: float):
    """Per-positive mean hinge loss and d loss / d score for pos and negatives."""
    viol = margin - s_pos[:, None] + s_neg
    active = (viol > 0).astype(np.float64)
    k = s_neg.shape[1]
    loss = np.maximum(viol, 0.0).mean(axis=1)
    return loss, -active.sum(axis=1) / k, active / k


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def logistic_loss(s_pos: np.ndarray, s_neg: np.ndarray):
    """``log(1 + exp(-y s))`` with y=+1 for the positive and y=-1 for the
    (averaged) negatives, per positive triple."""
    loss = _softplus(-s_pos) + _softplus(s_neg).mean(axis=1)
    return loss, -_sigmoid(-s_pos), _sigmoid(s_neg) / s_neg.shape[1]


def triple_loss_and_grads(kind, ent, rel, pos, neg, margin=1.0, reg=0.0):
    """Per-positive loss for a batch and the gradient of its sum.

    ``pos`` has shape (b, 3) and ``neg`` (b, k, 3), both as id triples.
    Gradients are returned compactly for the touched rows only:
    ``(loss, ent_ids, grad_ent_rows, rel_ids, grad_rel_rows)``.
    """
    hp, rp, tp = ent[pos[:, 0]], rel[pos[:, 1]], ent[pos[:, 2]]
    hn, rn, tn = ent[neg[..., 0]], rel[neg[..., 1]], ent[neg[..., 2]]
    s_pos, gh_p, gr_p, gt_p = score_and_grads(kind, hp, rp, tp)
    s_neg, gh_n, gr_n, gt_n = score_and_grads(kind, hn, rn, tn)
    if kind == TRANSE:
        loss, d_pos, d_neg = margin_loss(s_pos, s_neg, margin)
    else:
        loss, d_pos, d_neg = logistic_loss(s_pos, s_neg)

    dim = ent.shape[1]
    e_idx = np.concatenate([pos[:, 0], pos[:, 2], neg[..., 0].ravel(), neg[..., 2].ravel()])
    e_grad = np.concatenate([
        d_pos[:, None] * gh_p,
        d_pos[:, None] * gt_p,
        (d_neg[..., None] * gh_n).reshape(-1, dim),
        (d_neg[..., None] * gt_n).reshape(-1, dim),
    ])
    r_idx = np.concatenate([pos[:, 1], neg[..., 1].ravel()])
    r_grad = np.concatenate([d_pos[:, None] * gr_p, (d_neg[..., None] * gr_n).reshape(-1, dim)])
    if reg and kind != TRANSE:
        loss = loss + reg * ((hp * hp).sum(-1) + (rp * rp).sum(-1) + (tp * tp).sum(-1))
        e_idx = np.concatenate([e_idx, pos[:, 0], pos[:, 2]])
        e_grad = np.concatenate([e_grad, 2 * reg * hp, 2 * reg * tp])
        r_idx = np.concatenate([r_idx, pos[:, 1]])
        r_grad = np.concatenate([r_grad, 2 * reg * rp])

    ent_ids, e_inv = np.unique(e_idx, return_inverse=True)
    g_ent = np.zeros((ent_ids.shape[0], dim))
    np.add.at(g_ent, e_inv, e_grad)
    rel_ids, r_inv = np.unique(r_idx, return_inverse=True)
    g_rel = np.zeros((rel_ids.shape[0], dim))
    np.add.at(g_rel, r_inv, r_grad)
    return loss, ent_ids, g_ent, rel_ids, g_rel


def corrupt_batch(triples: np.ndarray, rng: np.random.Generator, n: int, n_entities: int) -> np.ndarray:
    """``n`` corruptions per triple; head or tail replaced by a fair coin.

    The replacement is uniform over all entities except the original one,
    which is the same distribution as rejecting and resampling.
    """
    if n < 1:
        raise ValueError("need at least one corruption per triple")
    if n_entities < 2:
        raise ValueError("cannot corrupt triples with fewer than two entities")
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    out = np.repeat(triples[:, None, :], n, axis=1)
    tail = rng.random((triples.shape[0], n)) < 0.5
    draw = rng.integers(0, n_entities - 1, size=(triples.shape[0], n))
    col = np.where(tail, 2, 0)
    original = np.take_along_axis(out, col[..., None], axis=2)[..., 0]
    replacement = draw + (draw >= original)
    np.put_along_axis(out, col[..., None], replacement[..., None], axis=2)
    return out


def negative_corrupt(triple, rng: np.random.Generator, n: int, n_entities: int) -> list[tuple[int, int, int]]:
    return [tuple(row) for row in corrupt_batch(np.asarray(triple)[None, :], rng, n, n_entities)[0].tolist()]


def _xavier(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def _normalize_rows(mat: np.ndarray, rows: np.ndarray | None = None) -> None:
    if rows is None:
        rows = np.arange(mat.shape[0])
    norms = np.linalg.norm(mat[rows], axis=1, keepdims=True)
    mat[rows] = np.divide(mat[rows], norms, out=mat[rows], where=norms > 0)


class KGEModel(BaseEstimator):
    """TransE, DistMult or ComplEx embedding trained by SGD with negative sampling.

    ``dim`` is the real dimension for TransE and DistMult and the complex
    dimension for ComplEx (stored as ``2 * dim`` reals).
    """

    def __init__(
        self,
        kind: str = TRANSE,
        dim: int = 100,
        epochs: int = 100,
        learning_rate: float = 0.01,
        margin: float = 1.0,
        negatives: int = 25,
        batch_size: int = 1024,
        regularization: float = 1e-5,
        random_state: int = 0,
        n_threads: int = 1,
    ):
        self.kind = kind
        self.dim = dim
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.margin = margin
        self.negatives = negatives
        self.batch_size = batch_size
        self.regularization = regularization
        self.random_state = random_state
        self.n_threads = n_threads

    @property
    def width(self) -> int:
        return 2 * self.dim if self.kind == COMPLEX else self.dim

    def initialize(self, n_entities: int, n_relations: int, rng: np.random.Generator) -> KGEModel:
        if self.kind not in KGE_KINDS:
            raise UnsupportedOperation(f"unknown model kind {self.kind!r}")
        self.entity_embeddings_ = _xavier(rng, n_entities, self.width)
        self.relation_embeddings_ = _xavier(rng, max(n_relations, 1), self.width)
        if self.kind == TRANSE:
            _normalize_rows(self.entity_embeddings_)
        self.loss_history_: list[float] = []
        return self

    def fit(self, graph: KnowledgeGraph, y=None) -> KGEModel:
        rng = np.random.default_rng(self.random_state)
        self.initialize(graph.n_entities, graph.n_relations, rng)
        for epoch in range(self.epochs):
            loss = train_epoch(self, graph.triples, rng)
            self.loss_history_.append(loss)
            logger.debug("%s epoch %d loss %.6f", self.kind, epoch + 1, loss)
        return self

    def score_triples(self, h, r, t) -> np.ndarray:
        check_is_fitted(self, "entity_embeddings_")
        ent, rel = self.entity_embeddings_, self.relation_embeddings_
        return score_and_grads(self.kind, ent[np.asarray(h)], rel[np.asarray(r)], ent[np.asarray(t)])[0]

    def to_embedding_set(self) -> EmbeddingSet:
        check_is_fitted(self, "entity_embeddings_")
        n = self.entity_embeddings_.shape[0]
        return EmbeddingSet(np.arange(n), self.entity_embeddings_, self.kind, config_hash(self.get_params()))


def _sgd_batch(model: KGEModel, triples: np.ndarray, n_entities: int, rng: np.random.Generator) -> float:
    ent, rel = model.entity_embeddings_, model.relation_embeddings_
    neg = corrupt_batch(triples, rng, model.negatives, n_entities)
    with np.errstate(over="ignore", invalid="ignore"):
        loss, ent_ids, g_ent, rel_ids, g_rel = triple_loss_and_grads(
            model.kind, ent, rel, triples, neg, model.margin, model.regularization
        )
    total = float(loss.sum())
    if not np.isfinite(total):
        raise TrainingError(
            f"{model.kind}: non-finite loss; learning rate {model.learning_rate} is probably too high"
        )
    if model.learning_rate:
        ent[ent_ids] -= model.learning_rate * g_ent
        rel[rel_ids] -= model.learning_rate * g_rel
        if model.kind == TRANSE:
            _normalize_rows(ent, ent_ids)
    return total


def train_epoch(model: KGEModel, triples, rng: np.random.Generator) -> float:
    """One shuffled pass over the positives; returns the mean per-triple loss.

    With ``n_threads > 1`` batches are processed by a thread pool that writes
    to the shared parameter arrays without locking (lost updates are
    tolerated); use one thread for reproducible results.
    """
    if isinstance(triples, KnowledgeGraph):
        triples = triples.triples
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if triples.shape[0] == 0:
        return 0.0
    n_entities = model.entity_embeddings_.shape[0]
    order = rng.permutation(triples.shape[0])
    batches = [triples[order[i : i + model.batch_size]] for i in range(0, len(order), model.batch_size)]
    if model.n_threads > 1 and len(batches) > 1:
        seeds = rng.integers(0, 2**63 - 1, size=len(batches))
        with ThreadPoolExecutor(model.n_threads) as pool:
            totals = list(
                pool.map(lambda bs: _sgd_batch(model, bs[0], n_entities, np.random.default_rng(bs[1])),
                         zip(batches, seeds))
            )
    else:
        totals = [_sgd_batch(model, b, n_entities, rng) for b in batches]
    return float(sum(totals) / triples.shape[0])


def score_triple(model: KGEModel, h: int, r: int, t: int) -> float:
    if getattr(model, "kind", None) not in KGE_KINDS:
        raise UnsupportedOperation(f"model kind {getattr(model, 'kind', None)!r} has no triple score")
    return float(model.score_triples(h, r, t))


def link_prediction_mrr(model: KGEModel, test, known) -> tuple[float, float]:
    """Filtered MRR over head and tail replacement, plus the random-ranking expectation.

    Candidates forming another ``known`` triple are removed before ranking.
    Ties count half, so a constant scorer lands on the random baseline. The
    baseline for ``m`` remaining candidates is ``H_m / m``.
    """
    check_is_fitted(model, "entity_embeddings_")
    test = np.asarray(test, dtype=np.int64).reshape(-1, 3)
    if len(test) == 0:
        raise ValueError("no test triples")
    n = model.entity_embeddings_.shape[0]
    tails: dict[tuple[int, int], set[int]] = {}
    heads: dict[tuple[int, int], set[int]] = {}
    for h, r, t in np.asarray(known, dtype=np.int64).reshape(-1, 3).tolist():
        tails.setdefault((h, r), set()).add(t)
        heads.setdefault((r, t), set()).add(h)
    everyone = np.arange(n)
    harmonic = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, n + 1))])
    rr, base = [], []
    for h, r, t in test.tolist():
        for side, true, others in ((2, t, tails.get((h, r), set())), (0, h, heads.get((r, t), set()))):
            cand = np.array([h, r, t])[:, None].repeat(n, axis=1)
            cand[side] = everyone
            scores = model.score_triples(*cand)
            keep = np.ones(n, dtype=bool)
            keep[list(others - {true})] = False
            s_true = scores[true]
            s = scores[keep]
            rank = 1 + (s > s_true).sum() + 0.5 * ((s == s_true).sum() - 1)
            rr.append(1.0 / rank)
            m = int(keep.sum())
            base.append(harmonic[m] / m)
    return float(np.mean(rr)), float(np.mean(base))
