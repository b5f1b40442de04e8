"""Pieces shared by all task runners: run records and feature lookup."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from ..mapping import DatasetEntity, EntityMapping
from ..metrics import ScenarioMetrics
from ..vectors import EmbeddingSet

OK = "ok"
SKIPPED = "skipped"
FAILED = "failed"


@dataclass
class TaskRun:
    """Outcome of one (algorithm, hyperparameters, fold) evaluation."""

    algorithm: str
    params: dict[str, Any]
    fold: int
    status: str = OK
    reason: str = ""
    metrics: tuple[ScenarioMetrics, ...] = ()
    coverage: float = 0.0

    @property
    def params_key(self) -> str:
        return params_key(self.params)


def params_key(params: Mapping[str, Any]) -> str:
    return json.dumps(dict(params), sort_keys=True, separators=(",", ":"))


def entity_lookup(entities: Sequence[DatasetEntity], mapping: EntityMapping, emb: EmbeddingSet | None = None) -> dict[DatasetEntity, int]:
    """Dataset entity -> KG entity id, for pooled ``entities`` indexed like ``mapping``.

    With ``emb`` given, entities whose KG entity has no vector count as unmapped.
    """
    out = {}
    for pid, match in mapping.items():
        if emb is None or match.kg_id in emb:
            out[entities[pid]] = match.kg_id
    return out


def features(entities: Sequence[DatasetEntity], lookup: Mapping[DatasetEntity, int], emb: EmbeddingSet):
    """``(X, mapped)``: one float64 row per mapped entity and the row mask over ``entities``."""
    mapped = np.array([e in lookup for e in entities], dtype=bool)
    rows = [emb.position(lookup[e]) for e, m in zip(entities, mapped) if m]
    X = emb.vectors[np.array(rows, dtype=np.int64)].astype(np.float64) if rows else np.zeros((0, emb.dim))
    return X, mapped
