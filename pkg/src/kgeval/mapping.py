"""Map dataset entities onto knowledge graph entities.

Three strategies are available: exact URI match, same-as links and fuzzy
label matching with a token-sorted Levenshtein similarity. Mappers follow the
estimator convention (``fit`` on a graph, ``transform`` a collection of
dataset entities) and compose into chains where each mapper only sees what
its predecessors left unmapped.
"""

from __future__ import annotations

import csv
import logging
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .graph import BLANK_PREFIX, KnowledgeGraph

logger = logging.getLogger(__name__)

METHOD_URI = "uri"
METHOD_SAMEAS = "same-as"
METHOD_LABEL = "label"


class MappingConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetEntity:
    """An entity as referenced by a task dataset: one label plus optional URIs."""

    label: str
    uris: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.label or not self.label.strip():
            raise ValueError("dataset entity needs a non-empty label")
        object.__setattr__(self, "uris", tuple(sorted(set(self.uris))))

    @property
    def key(self) -> tuple[str, tuple[str, ...]]:
        return (self.label, self.uris)


@dataclass(frozen=True)
class Match:
    kg_id: int
    confidence: float
    method: str


class EntityMapping(Mapping[int, Match]):
    """Partial map from dataset entity id to a :class:`Match`."""

    def __init__(self, matches: Mapping[int, Match] | None = None):
        self._matches: dict[int, Match] = dict(sorted((matches or {}).items()))

    def __getitem__(self, key: int) -> Match:
        return self._matches[key]

    def __iter__(self) -> Iterator[int]:
        return iter(self._matches)

    def __len__(self) -> int:
        return len(self._matches)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, EntityMapping):
            return self._matches == other._matches
        return NotImplemented

    def __repr__(self) -> str:
        return f"EntityMapping({len(self)} matches)"

    def union(self, other: EntityMapping) -> EntityMapping:
        merged = dict(self._matches)
        for k, v in other.items():
            merged.setdefault(k, v)
        return EntityMapping(merged)

    def coverage(self, entity_ids: Iterable[int]) -> dict[str, float]:
        ids = list(entity_ids)
        mapped = sum(1 for i in ids if i in self._matches)
        return {
            "total": len(ids),
            "mapped": mapped,
            "unmapped": len(ids) - mapped,
            "coverage": mapped / len(ids) if ids else 0.0,
        }

    def to_tsv(self, path: str | Path, graph: KnowledgeGraph) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
            writer.writerow(["dataset_id", "kg_iri", "confidence", "method"])
            for did, m in self._matches.items():
                writer.writerow([did, graph.entities[m.kg_id], repr(m.confidence), m.method])

    @classmethod
    def from_tsv(cls, path: str | Path, graph: KnowledgeGraph) -> EntityMapping:
        matches = {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh, delimiter="\t")
            for row in reader:
                kg_id = graph.entity_index[row["kg_iri"]]
                matches[int(row["dataset_id"])] = Match(kg_id, float(row["confidence"]), row["method"])
        return cls(matches)


def normalize_label(text: str) -> str:
    """Lowercase, turn punctuation into spaces and collapse whitespace."""
    chars = [" " if unicodedata.category(ch).startswith("P") else ch for ch in text.lower()]
    return " ".join("".join(chars).split())


def token_sort_key(normalized: str) -> str:
    return " ".join(sorted(normalized.split(" "))) if normalized else ""


def levenshtein(a: str, b: str) -> int:
    """Edit distance using Hyyrö's bit-parallel formulation of Myers' algorithm."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    m = len(a)
    full = (1 << m) - 1
    last = 1 << (m - 1)
    peq: dict[str, int] = {}
    for i, ch in enumerate(a):
        peq[ch] = peq.get(ch, 0) | (1 << i)
    vp, vn, score = full, 0, m
    for ch in b:
        eq = peq.get(ch, 0)
        xv = eq | vn
        xh = ((((eq & vp) + vp) & full) ^ vp) | eq
        hp = vn | (~(xh | vp) & full)
        hn = vp & xh
        if hp & last:
            score += 1
        elif hn & last:
            score -= 1
        hp = ((hp << 1) | 1) & full
        hn = (hn << 1) & full
        vp = hn | (~(xv | hp) & full)
        vn = hp & xv
    return score


def token_sort_similarity(a: str, b: str) -> float:
    """``1 - lev(a', b') / max(|a'|, |b'|)`` on token-sorted inputs."""
    a, b = token_sort_key(a), token_sort_key(b)
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


class LabelIndex:
    """Normalized KG labels with entity lists ranked by degree.

    Besides the ``normalized label -> ids`` map the index keeps the
    token-sorted form of each label (what the similarity compares) and an
    inverted token index used to generate candidates on large graphs.
    """

    def __init__(self, graph: KnowledgeGraph):
        by_label: dict[str, set[int]] = {}
        for eid, label in graph.iter_labels():
            if graph.entities[eid].startswith(BLANK_PREFIX):
                continue
            norm = normalize_label(label)
            if norm:
                by_label.setdefault(norm, set()).add(eid)

        def rank(ids: Iterable[int]) -> list[int]:
            return sorted(ids, key=lambda e: (-int(graph.degrees[e]), e))

        self.by_label: dict[str, list[int]] = {k: rank(v) for k, v in sorted(by_label.items())}
        by_sorted: dict[str, set[int]] = {}
        for norm, ids in self.by_label.items():
            by_sorted.setdefault(token_sort_key(norm), set()).update(ids)
        self.by_sorted: dict[str, list[int]] = {k: rank(v) for k, v in sorted(by_sorted.items())}
        self.tokens: dict[str, list[str]] = {}
        for key in self.by_sorted:
            for tok in set(key.split(" ")):
                self.tokens.setdefault(tok, []).append(key)

    def __len__(self) -> int:
        return len(self.by_label)

    def candidates(self, key: str, full_scan: bool) -> Iterable[str]:
        if full_scan:
            return self.by_sorted.keys()
        seen: dict[str, None] = {}
        for tok in key.split(" "):
            for cand in self.tokens.get(tok, ()):
                seen[cand] = None
        return seen.keys()


def _best_entity(ids: Iterable[int], graph: KnowledgeGraph) -> int:
    return min(ids, key=lambda e: (-int(graph.degrees[e]), e))


class URIMapper(BaseEstimator):
    """Exact IRI match, then same-as lookup; confidence is always 1.0."""

    def __init__(self, use_sameas: bool = True):
        self.use_sameas = use_sameas

    def fit(self, graph: KnowledgeGraph, y=None) -> URIMapper:
        self.graph_ = graph
        external: dict[str, set[int]] = {}
        for eid, iri in graph.iter_sameas():
            if not graph.entities[eid].startswith(BLANK_PREFIX):
                external.setdefault(iri, set()).add(eid)
        self.sameas_index_ = external
        return self

    def transform(self, entities: Mapping[int, DatasetEntity]) -> EntityMapping:
        check_is_fitted(self, "graph_")
        graph = self.graph_
        matches = {}
        for did, ent in entities.items():
            exact = {graph.entity_index[u] for u in ent.uris if u in graph.entity_index}
            exact = {e for e in exact if not graph.entities[e].startswith(BLANK_PREFIX)}
            if exact:
                matches[did] = Match(_best_entity(exact, graph), 1.0, METHOD_URI)
                continue
            if not self.use_sameas:
                continue
            linked = set().union(*(self.sameas_index_.get(u, ()) for u in ent.uris)) if ent.uris else set()
            if linked:
                matches[did] = Match(_best_entity(linked, graph), 1.0, METHOD_SAMEAS)
        return EntityMapping(matches)


class LabelMapper(BaseEstimator):
    """Fuzzy label matching against every label of every KG entity.

    Parameters
    ----------
    threshold : float
        Minimum token-sort similarity in (0, 1]. At 1.0 matching reduces to
        an exact lookup of the token-sorted normalized label.
    full_scan_limit : int
        Below this many distinct labels every label is compared; above it only
        labels sharing at least one token with the query are.
    """

    def __init__(self, threshold: float = 1.0, full_scan_limit: int = 100_000):
        self.threshold = threshold
        self.full_scan_limit = full_scan_limit

    def fit(self, graph: KnowledgeGraph, y=None) -> LabelMapper:
        if not 0.0 < self.threshold <= 1.0:
            raise MappingConfigError(f"threshold must be in (0, 1], got {self.threshold}")
        self.graph_ = graph
        self.index_ = LabelIndex(graph)
        return self

    def match(self, label: str) -> Match | None:
        check_is_fitted(self, "index_")
        key = token_sort_key(normalize_label(label))
        if not key:
            return None
        index = self.index_
        exact = index.by_sorted.get(key)
        if exact:
            return Match(exact[0], 1.0, METHOD_LABEL)
        if self.threshold >= 1.0:
            return None

        full_scan = len(index) < self.full_scan_limit
        best_score = self.threshold
        best_keys: list[str] = []
        n = len(key)
        for cand in index.candidates(key, full_scan):
            longest = max(n, len(cand))
            # length difference bounds the distance from below
            if 1.0 - abs(n - len(cand)) / longest < best_score - 1e-12:
                continue
            score = 1.0 - levenshtein(key, cand) / longest
            if score > best_score + 1e-12:
                best_score, best_keys = score, [cand]
            elif score >= best_score - 1e-12:
                best_keys.append(cand)
        if not best_keys:
            return None
        ids = {e for k in best_keys for e in index.by_sorted[k]}
        return Match(_best_entity(ids, self.graph_), best_score, METHOD_LABEL)

    def transform(self, entities: Mapping[int, DatasetEntity]) -> EntityMapping:
        matches = {}
        cache: dict[str, Match | None] = {}
        for did, ent in entities.items():
            if ent.label not in cache:
                cache[ent.label] = self.match(ent.label)
            if cache[ent.label] is not None:
                matches[did] = cache[ent.label]
        return EntityMapping(matches)


class MapperChain(BaseEstimator):
    """Run mappers in order; each one only sees still-unmapped entities."""

    def __init__(self, mappers: Sequence[BaseEstimator] = ()):
        self.mappers = mappers

    def fit(self, graph: KnowledgeGraph, y=None) -> MapperChain:
        if not self.mappers:
            raise MappingConfigError("a mapper chain needs at least one mapper")
        for mapper in self.mappers:
            mapper.fit(graph)
        self.fitted_ = True
        return self

    def transform(self, entities: Mapping[int, DatasetEntity]) -> EntityMapping:
        check_is_fitted(self, "fitted_")
        result = EntityMapping()
        for mapper in self.mappers:
            remaining = {k: v for k, v in entities.items() if k not in result}
            result = result.union(mapper.transform(remaining))
        return result


def map_by_uri(graph: KnowledgeGraph, entities: Mapping[int, DatasetEntity]) -> EntityMapping:
    return URIMapper().fit(graph).transform(entities)


def map_by_label(
    graph: KnowledgeGraph, entities: Mapping[int, DatasetEntity], threshold: float
) -> EntityMapping:
    return LabelMapper(threshold).fit(graph).transform(entities)


def run_mapper_chain(
    mappers: Sequence[BaseEstimator], graph: KnowledgeGraph, entities: Mapping[int, DatasetEntity]
) -> EntityMapping:
    return MapperChain(mappers).fit(graph).transform(entities)


def build_chain(spec: Sequence[str | Mapping[str, float]]) -> MapperChain:
    """Build a chain from config entries like ``["uri", {"label": 0.7}]``."""
    if not spec:
        raise MappingConfigError("a mapper chain needs at least one mapper")
    mappers: list[BaseEstimator] = []
    for item in spec:
        if item in ("uri", "same-as", "sameas"):
            mappers.append(URIMapper())
        elif isinstance(item, Mapping) and set(item) == {"label"}:
            threshold = float(item["label"])
            if not 0.0 < threshold <= 1.0:
                raise MappingConfigError(f"threshold must be in (0, 1], got {threshold}")
            mappers.append(LabelMapper(threshold=threshold))
        elif item == "label":
            mappers.append(LabelMapper())
        else:
            raise MappingConfigError(f"unknown mapper {item!r}")
    return MapperChain(mappers)
