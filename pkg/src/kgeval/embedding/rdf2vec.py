"""RDF2vec: random walks over outgoing edges, then skip-gram with negative sampling.

Walk tokens share one vocabulary: entity ``e`` is token ``e`` and relation
``r`` is token ``n_entities + r``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Sequence

import numba
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..graph import KnowledgeGraph
from ..vectors import EmbeddingSet, config_hash

logger = logging.getLogger(__name__)

RDF2VEC = "RDF2vec"
_CHUNK = 4096


class CorpusError(ValueError):
    pass


@dataclass
class WalkCorpus:
    """Walks stored flat: walk ``i`` is ``tokens[offsets[i]:offsets[i + 1]]``."""

    tokens: np.ndarray
    offsets: np.ndarray
    n_entities: int
    n_relations: int = 0

    @classmethod
    def from_sequences(cls, walks: Sequence[Sequence[int]], n_entities: int | None = None) -> WalkCorpus:
        lengths = np.array([len(w) for w in walks], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        tokens = np.fromiter((t for w in walks for t in w), dtype=np.int64, count=int(offsets[-1]))
        if n_entities is None:
            n_entities = int(tokens.max()) + 1 if tokens.size else 0
        return cls(tokens, offsets, n_entities)

    @property
    def vocab_size(self) -> int:
        return self.n_entities + self.n_relations

    def __len__(self) -> int:
        return int(self.offsets.shape[0] - 1)

    def __iter__(self) -> Iterator[list[int]]:
        for i in range(len(self)):
            yield self.tokens[self.offsets[i] : self.offsets[i + 1]].tolist()


def _out_adjacency(graph: KnowledgeGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    triples = graph.triples
    order = np.lexsort((triples[:, 2], triples[:, 1], triples[:, 0]))
    sorted_t = triples[order]
    indptr = np.zeros(graph.n_entities + 1, dtype=np.int64)
    np.add.at(indptr, sorted_t[:, 0] + 1, 1)
    return np.cumsum(indptr), sorted_t[:, 1].copy(), sorted_t[:, 2].copy()


def generate_walks(graph: KnowledgeGraph, walks_per_entity: int, depth: int, rng: np.random.Generator) -> WalkCorpus:
    """Up to ``walks_per_entity`` distinct walks of at most ``depth`` hops per entity.

    Each step picks an outgoing edge uniformly; a walk stops at a sink.
    Duplicate walks from the same start are kept once, so entities with few
    paths get fewer walks.
    """
    if depth < 1:
        raise ValueError("walk depth must be at least 1")
    if walks_per_entity < 1:
        raise ValueError("walks_per_entity must be at least 1")
    n_ent = graph.n_entities
    indptr, rel, obj = _out_adjacency(graph)
    out_deg = np.diff(indptr)
    width = 2 * depth + 1
    chunks_tok, chunks_len = [], []
    for lo in range(0, n_ent, _CHUNK):
        starts = np.repeat(np.arange(lo, min(lo + _CHUNK, n_ent), dtype=np.int64), walks_per_entity)
        walks = np.full((starts.shape[0], width), -1, dtype=np.int64)
        walks[:, 0] = starts
        current = starts.copy()
        alive = np.ones(starts.shape[0], dtype=bool)
        for step in range(depth):
            alive &= out_deg[current] > 0
            if not alive.any():
                break
            idx = np.flatnonzero(alive)
            cur = current[idx]
            edge = indptr[cur] + (rng.random(idx.shape[0]) * out_deg[cur]).astype(np.int64)
            walks[idx, 2 * step + 1] = n_ent + rel[edge]
            walks[idx, 2 * step + 2] = obj[edge]
            current[idx] = obj[edge]
        walks = np.unique(walks, axis=0)
        lengths = (walks >= 0).sum(axis=1)
        chunks_tok.append(walks[walks >= 0])
        chunks_len.append(lengths)
    tokens = np.concatenate(chunks_tok) if chunks_tok else np.zeros(0, dtype=np.int64)
    lengths = np.concatenate(chunks_len) if chunks_len else np.zeros(0, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    return WalkCorpus(tokens, offsets, n_ent, graph.n_relations)


@numba.njit(cache=True)
def _sgns(tokens, offsets, w_in, w_out, cum_table, window, negatives, epochs, lr, seeds):
    n_walks = offsets.shape[0] - 1
    dim = w_in.shape[1]
    n_table = cum_table.shape[0]
    total = cum_table[n_table - 1]
    steps = epochs * tokens.shape[0]
    done = 0
    grad_in = np.zeros(dim)
    for epoch in range(epochs):
        np.random.seed(seeds[epoch])
        for wi in range(n_walks):
            lo = offsets[wi]
            hi = offsets[wi + 1]
            for i in range(lo, hi):
                alpha = lr * max(1e-4, 1.0 - done / steps)
                done += 1
                center = tokens[i]
                for j in range(max(lo, i - window), min(hi, i + window + 1)):
                    if j == i:
                        continue
                    grad_in[:] = 0.0
                    for s in range(negatives + 1):
                        if s == 0:
                            target = tokens[j]
                            label = 1.0
                        else:
                            target = np.searchsorted(cum_table, np.random.random() * total, side="right")
                            if target >= n_table:
                                target = n_table - 1
                            if target == tokens[j]:
                                continue
                            label = 0.0
                        f = 0.0
                        for k in range(dim):
                            f += w_in[center, k] * w_out[target, k]
                        if f > 30.0:
                            sig = 1.0
                        elif f < -30.0:
                            sig = 0.0
                        else:
                            sig = 1.0 / (1.0 + np.exp(-f))
                        g = alpha * (label - sig)
                        for k in range(dim):
                            grad_in[k] += g * w_out[target, k]
                            w_out[target, k] += g * w_in[center, k]
                    for k in range(dim):
                        w_in[center, k] += grad_in[k]


def train_skipgram(
    corpus: WalkCorpus | Sequence[Sequence[int]],
    d: int,
    window: int,
    negatives: int,
    epochs: int,
    lr: float,
    rng: np.random.Generator,
    kind: str = RDF2VEC,
    provenance: dict | None = None,
) -> EmbeddingSet:
    """Skip-gram with negative sampling; returns vectors for entity tokens only.

    Input vectors start uniform in ``[-0.5/d, 0.5/d]`` and output vectors at
    zero. Negatives are drawn from the unigram distribution raised to 0.75 and
    the learning rate decays linearly over all token positions.
    """
    if not isinstance(corpus, WalkCorpus):
        corpus = WalkCorpus.from_sequences(corpus)
    if corpus.tokens.size == 0:
        raise CorpusError("empty walk corpus")
    counts = np.bincount(corpus.tokens, minlength=corpus.vocab_size)
    if np.count_nonzero(counts) < 2:
        raise CorpusError("walk corpus has a single distinct token; no negatives available")
    vocab = max(corpus.vocab_size, counts.shape[0])
    w_in = (rng.random((vocab, d)) - 0.5) / d
    w_out = np.zeros((vocab, d))
    cum_table = np.cumsum(counts.astype(np.float64) ** 0.75)
    seeds = rng.integers(0, 2**31 - 1, size=max(epochs, 0))
    if epochs > 0 and lr != 0:
        _sgns(corpus.tokens, corpus.offsets, w_in, w_out, cum_table, window, negatives, epochs, float(lr), seeds)
    n = corpus.n_entities
    return EmbeddingSet(np.arange(n), w_in[:n], kind, config_hash(provenance or {}))


class RDF2Vec(BaseEstimator):
    def __init__(
        self,
        dim: int = 100,
        walks_per_entity: int = 100,
        depth: int = 4,
        window: int = 5,
        negatives: int = 5,
        epochs: int = 5,
        learning_rate: float = 0.025,
        random_state: int = 0,
    ):
        self.dim = dim
        self.walks_per_entity = walks_per_entity
        self.depth = depth
        self.window = window
        self.negatives = negatives
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.random_state = random_state

    kind = RDF2VEC

    def fit(self, graph: KnowledgeGraph, y=None) -> RDF2Vec:
        rng = np.random.default_rng(self.random_state)
        corpus = generate_walks(graph, self.walks_per_entity, self.depth, rng)
        logger.info("RDF2vec: %d walks, %d tokens", len(corpus), corpus.tokens.size)
        self.embedding_ = train_skipgram(
            corpus, self.dim, self.window, self.negatives, self.epochs, self.learning_rate, rng,
            provenance=self.get_params(),
        )
        return self

    def to_embedding_set(self) -> EmbeddingSet:
        check_is_fitted(self, "embedding_")
        return self.embedding_
