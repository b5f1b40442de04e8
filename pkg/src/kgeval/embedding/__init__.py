"""Entity embedding models and export."""

from __future__ import annotations

from typing import Any, Mapping

from ..graph import KnowledgeGraph
from ..vectors import EmbeddingSet
from .kge import (
    COMPLEX,
    DISTMULT,
    KGE_KINDS,
    TRANSE,
    KGEModel,
    TrainingError,
    UnsupportedOperation,
    corrupt_batch,
    link_prediction_mrr,
    negative_corrupt,
    score_triple,
    train_epoch,
)
from .rdf2vec import RDF2VEC, CorpusError, RDF2Vec, WalkCorpus, generate_walks, train_skipgram

MODEL_KINDS = KGE_KINDS + (RDF2VEC,)

__all__ = [
    "COMPLEX", "DISTMULT", "MODEL_KINDS", "RDF2VEC", "TRANSE",
    "CorpusError", "KGEModel", "RDF2Vec", "TrainingError", "UnsupportedOperation", "WalkCorpus",
    "corrupt_batch", "export_embeddings", "generate_walks", "link_prediction_mrr", "make_model", "negative_corrupt",
    "score_triple", "train_embedding", "train_epoch", "train_skipgram",
]


def make_model(kind: str, params: Mapping[str, Any] | None = None, **overrides):
    params = {**(params or {}), **overrides}
    if kind == RDF2VEC:
        return RDF2Vec(**params)
    if kind in KGE_KINDS:
        return KGEModel(kind=kind, **params)
    raise UnsupportedOperation(f"unknown embedding kind {kind!r}; expected one of {MODEL_KINDS}")


def export_embeddings(model) -> EmbeddingSet:
    return model.to_embedding_set()


def train_embedding(kind: str, graph: KnowledgeGraph, params: Mapping[str, Any] | None = None, **overrides) -> EmbeddingSet:
    return export_embeddings(make_model(kind, params, **overrides).fit(graph))
