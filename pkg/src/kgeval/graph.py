"""N-Triples parsing and an interned, read-only triple store.

Entities and relations are dictionary-encoded to dense integer ids in
first-seen order. Literal objects of label predicates go to the label index,
IRI objects of same-as predicates to the same-as index; every other IRI-object
triple is a relational triple.
"""

from __future__ import annotations

import gzip
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)

RDFS_LABEL = "http://www.w3.org/2000/01/rdf-schema#label"
SKOS_PREF_LABEL = "http://www.w3.org/2004/02/skos/core#prefLabel"
FOAF_NAME = "http://xmlns.com/foaf/0.1/name"
OWL_SAME_AS = "http://www.w3.org/2002/07/owl#sameAs"

DEFAULT_LABEL_PREDICATES = (RDFS_LABEL, SKOS_PREF_LABEL, FOAF_NAME)
DEFAULT_SAMEAS_PREDICATES = (OWL_SAME_AS,)

BLANK_PREFIX = "_:"


class ParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Literal:
    value: str
    lang: str | None = None
    datatype: str | None = None


Term = Union[str, Literal]


@dataclass(frozen=True)
class Triple:
    subject: str
    predicate: str
    object: Term


@dataclass
class ParseStats:
    lines: int = 0
    triples: int = 0
    skipped: int = 0
    errors: list[ParseError] = field(default_factory=list)


_IRI = r"<([^<>\"{}|^`\\\x00-\x20]*)>"
_BNODE = r"(_:[A-Za-z0-9_][A-Za-z0-9_.\-]*)"
_LITERAL = r"\"((?:[^\"\\\n\r]|\\.)*)\"(?:@([a-zA-Z]+(?:-[a-zA-Z0-9]+)*)|\^\^" + _IRI + r")?"
_LINE = re.compile(
    r"^\s*(?:" + _IRI + "|" + _BNODE + r")\s*"
    + _IRI + r"\s*"
    r"(?:" + _IRI + "|" + _BNODE + "|" + _LITERAL + r")\s*\.\s*(?:#.*)?$"
)
_ESCAPE = re.compile(r"\\(?:u([0-9A-Fa-f]{4})|U([0-9A-Fa-f]{8})|(.))", re.DOTALL)
_SIMPLE_ESCAPES = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


def _unescape(text: str, line_no: int) -> str:
    if "\\" not in text:
        return text

    def repl(m: re.Match) -> str:
        if m.group(1) or m.group(2):
            return chr(int(m.group(1) or m.group(2), 16))
        ch = m.group(3)
        if ch not in _SIMPLE_ESCAPES:
            raise ParseError(line_no, f"invalid escape \\{ch}")
        return _SIMPLE_ESCAPES[ch]

    return _ESCAPE.sub(repl, text)


def parse_line(line: str, line_no: int = 0) -> Triple | None:
    """Parse one N-Triples statement; ``None`` for blank lines and comments."""
    stripped = line.strip()
    if not stripped or stripped.startswith("#"):
        return None
    m = _LINE.match(stripped)
    if m is None:
        raise ParseError(line_no, f"malformed statement: {stripped[:80]!r}")
    s_iri, s_bnode, pred, o_iri, o_bnode, lit, lang, dtype = m.groups()
    subject = _unescape(s_iri, line_no) if s_iri is not None else s_bnode
    predicate = _unescape(pred, line_no)
    if o_iri is not None:
        obj: Term = _unescape(o_iri, line_no)
    elif o_bnode is not None:
        obj = o_bnode
    else:
        obj = Literal(_unescape(lit, line_no), lang, dtype)
    return Triple(subject, predicate, obj)


def parse_ntriples(
    stream: IO[bytes] | Iterable[bytes | str],
    strict: bool = False,
    stats: ParseStats | None = None,
) -> Iterator[Triple]:
    """Stream triples from UTF-8 N-Triples input.

    In lenient mode (the default) malformed lines are skipped and recorded in
    ``stats``; in strict mode the first one raises :class:`ParseError`.
    """
    stats = stats if stats is not None else ParseStats()
    for line_no, raw in enumerate(stream, start=1):
        stats.lines += 1
        try:
            line = raw.decode("utf-8") if isinstance(raw, bytes) else raw
            triple = parse_line(line, line_no)
        except UnicodeDecodeError as exc:
            err = ParseError(line_no, f"invalid UTF-8: {exc}")
            if strict:
                raise err from exc
            stats.skipped += 1
            stats.errors.append(err)
            continue
        except ParseError as err:
            if strict:
                raise
            stats.skipped += 1
            stats.errors.append(err)
            continue
        if triple is not None:
            stats.triples += 1
            yield triple


def _term_to_nt(term: Term) -> str:
    if isinstance(term, Literal):
        body = (
            term.value.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\r", "\\r")
        )
        if term.lang:
            return f'"{body}"@{term.lang}'
        if term.datatype:
            return f'"{body}"^^<{term.datatype}>'
        return f'"{body}"'
    if term.startswith(BLANK_PREFIX):
        return term
    return f"<{term}>"


def format_triple(triple: Triple) -> str:
    return f"{_term_to_nt(triple.subject)} {_term_to_nt(triple.predicate)} {_term_to_nt(triple.object)} ."


class KnowledgeGraph:
    """Interned triple store with label, same-as and degree indices.

    Built once by :func:`build_graph` and read-only afterwards.
    """

    def __init__(
        self,
        entities: list[str],
        relations: list[str],
        triples: np.ndarray,
        labels: dict[int, list[str]],
        sameas: dict[int, frozenset[str]],
        dropped_literals: int = 0,
    ):
        self.entities = tuple(entities)
        self.relations = tuple(relations)
        self.entity_index = {iri: i for i, iri in enumerate(self.entities)}
        self.relation_index = {iri: i for i, iri in enumerate(self.relations)}
        self.triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        self.triples.setflags(write=False)
        self._labels = labels
        self._sameas = sameas
        self.degrees = np.bincount(
            np.concatenate([self.triples[:, 0], self.triples[:, 2]]), minlength=len(self.entities)
        ).astype(np.int64)
        self.degrees.setflags(write=False)
        self.dropped_literals = dropped_literals

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    @property
    def n_triples(self) -> int:
        return int(self.triples.shape[0])

    def _check(self, entity_id: int) -> None:
        if not 0 <= entity_id < len(self.entities):
            raise KeyError(f"unknown entity id {entity_id}")

    def labels_of(self, entity_id: int) -> list[str]:
        self._check(entity_id)
        return list(self._labels.get(entity_id, ()))

    def sameas_of(self, entity_id: int) -> set[str]:
        self._check(entity_id)
        return set(self._sameas.get(entity_id, ()))

    def degree(self, entity_id: int) -> int:
        self._check(entity_id)
        return int(self.degrees[entity_id])

    def iter_labels(self) -> Iterator[tuple[int, str]]:
        for eid in sorted(self._labels):
            for label in self._labels[eid]:
                yield eid, label

    def iter_sameas(self) -> Iterator[tuple[int, str]]:
        for eid in sorted(self._sameas):
            for iri in sorted(self._sameas[eid]):
                yield eid, iri

    def relational_triples(self) -> Iterator[Triple]:
        for h, r, t in self.triples.tolist():
            yield Triple(self.entities[h], self.relations[r], self.entities[t])

    def summary(self) -> dict[str, int]:
        return {
            "entities": self.n_entities,
            "relations": self.n_relations,
            "triples": self.n_triples,
            "labels": sum(len(v) for v in self._labels.values()),
            "sameas": sum(len(v) for v in self._sameas.values()),
            "dropped_literals": self.dropped_literals,
        }

    def __repr__(self) -> str:
        return f"KnowledgeGraph(entities={self.n_entities}, relations={self.n_relations}, triples={self.n_triples})"


def build_graph(
    triples: Iterable[Triple],
    label_predicates: Sequence[str] = DEFAULT_LABEL_PREDICATES,
    sameas_predicates: Sequence[str] = DEFAULT_SAMEAS_PREDICATES,
) -> KnowledgeGraph:
    if not label_predicates or not sameas_predicates:
        raise ValueError("label and same-as predicate lists must be non-empty")
    label_preds = frozenset(label_predicates)
    sameas_preds = frozenset(sameas_predicates)

    entity_index: dict[str, int] = {}
    relation_index: dict[str, int] = {}
    rows: list[tuple[int, int, int]] = []
    labels: dict[int, list[str]] = {}
    sameas_pairs: list[tuple[int, str]] = []
    dropped = 0

    def intern(iri: str) -> int:
        eid = entity_index.get(iri)
        if eid is None:
            eid = entity_index[iri] = len(entity_index)
        return eid

    for t in triples:
        if isinstance(t.object, Literal):
            if t.predicate in label_preds:
                labels.setdefault(intern(t.subject), []).append(t.object.value)
            else:
                dropped += 1
        elif t.predicate in sameas_preds:
            sameas_pairs.append((intern(t.subject), t.object))
        else:
            h = intern(t.subject)
            r = relation_index.setdefault(t.predicate, len(relation_index))
            rows.append((h, r, intern(t.object)))

    sameas: dict[int, set[str]] = {}
    entities = list(entity_index)
    for eid, other in sameas_pairs:
        sameas.setdefault(eid, set()).add(other)
        other_id = entity_index.get(other)
        if other_id is not None:
            sameas.setdefault(other_id, set()).add(entities[eid])

    return KnowledgeGraph(
        entities,
        list(relation_index),
        np.array(rows, dtype=np.int64).reshape(-1, 3),
        labels,
        {k: frozenset(v) for k, v in sameas.items()},
        dropped_literals=dropped,
    )


def _open_maybe_gzip(path: Path) -> IO[bytes]:
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def load_graph(
    paths: Sequence[str | Path],
    label_predicates: Sequence[str] = DEFAULT_LABEL_PREDICATES,
    sameas_predicates: Sequence[str] = DEFAULT_SAMEAS_PREDICATES,
    strict: bool = False,
) -> tuple[KnowledgeGraph, ParseStats]:
    """Load one or more ``.nt`` files (plain or gzip) into a graph."""
    stats = ParseStats()

    def stream() -> Iterator[Triple]:
        for path in paths:
            with _open_maybe_gzip(Path(path)) as fh:
                yield from parse_ntriples(fh, strict, stats)

    graph = build_graph(stream(), label_predicates, sameas_predicates)
    if stats.skipped:
        logger.warning("skipped %d malformed lines", stats.skipped)
    return graph, stats


def format_summary(graph: KnowledgeGraph, stats: ParseStats | None = None) -> str:
    """Load summary as ``key: value`` lines."""
    data = graph.summary()
    if stats is not None:
        data["skipped_lines"] = stats.skipped
    return "\n".join(f"{k}: {v}" for k, v in data.items())
