"""Task datasets: TSV loaders, the manifest, and the pooled entity list.

Every file is UTF-8, tab-separated, with a header row. URI columns hold zero
or more space-separated URIs.

=====================  =========================================================
task type              columns
=====================  =========================================================
classification,        ``label, uris, target``
regression, clustering
document_similarity    annotations ``doc_id, label, uris``; gold ``doc_a, doc_b, score``
entity_relatedness     ``seed_label, seed_uris, candidate_label, candidate_uris, rank``
semantic_analogies     ``a_label, a_uris, b_label, b_uris, c_label, c_uris, d_label, d_uris``
recommendation         ``user_id, label, uris, rating``
=====================  =========================================================
"""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .mapping import DatasetEntity

logger = logging.getLogger(__name__)

CLASSIFICATION = "classification"
REGRESSION = "regression"
CLUSTERING = "clustering"
DOCUMENT_SIMILARITY = "document_similarity"
ENTITY_RELATEDNESS = "entity_relatedness"
SEMANTIC_ANALOGIES = "semantic_analogies"
RECOMMENDATION = "recommendation"

TABULAR_TASKS = (CLASSIFICATION, REGRESSION, CLUSTERING)
TASK_TYPES = TABULAR_TASKS + (DOCUMENT_SIMILARITY, ENTITY_RELATEDNESS, SEMANTIC_ANALOGIES, RECOMMENDATION)


class DatasetError(ValueError):
    """A dataset file or manifest that cannot be loaded; names file and line."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


# -- datasets ----------------------------------------------------------------


@dataclass
class TabularDataset:
    name: str
    task_type: str
    entities: list[DatasetEntity]
    targets: list[Any]
    n_clusters: int | None = None

    def iter_entities(self) -> Iterator[DatasetEntity]:
        return iter(self.entities)

    def __len__(self) -> int:
        return len(self.entities)


@dataclass
class DocSimDataset:
    name: str
    documents: dict[str, list[DatasetEntity]]
    gold: list[tuple[str, str, float]]
    task_type: str = DOCUMENT_SIMILARITY

    def iter_entities(self) -> Iterator[DatasetEntity]:
        for doc in self.documents.values():
            yield from doc


@dataclass
class RelatednessDataset:
    name: str
    # seed -> candidates ordered by gold rank (rank 1 first)
    seeds: list[tuple[DatasetEntity, list[DatasetEntity]]]
    task_type: str = ENTITY_RELATEDNESS

    def iter_entities(self) -> Iterator[DatasetEntity]:
        for seed, cands in self.seeds:
            yield seed
            yield from cands


@dataclass
class AnalogyDataset:
    name: str
    quadruples: list[tuple[DatasetEntity, DatasetEntity, DatasetEntity, DatasetEntity]]
    task_type: str = SEMANTIC_ANALOGIES

    def iter_entities(self) -> Iterator[DatasetEntity]:
        for quad in self.quadruples:
            yield from quad


@dataclass
class RatingsDataset:
    """Positive ratings only; users with fewer than two are dropped at load."""

    name: str
    ratings: list[tuple[str, DatasetEntity, float]]
    threshold: float
    k: int = 10
    test_ratio: float = 0.2
    dropped_users: int = 0
    items: list[DatasetEntity] = field(default_factory=list)
    task_type: str = RECOMMENDATION

    def __post_init__(self):
        if not self.items:
            self.items = list(dict.fromkeys(item for _, item, _ in self.ratings))

    def iter_entities(self) -> Iterator[DatasetEntity]:
        return iter(self.items)

    def by_user(self) -> dict[str, list[DatasetEntity]]:
        users: dict[str, list[DatasetEntity]] = {}
        for user, item, _ in self.ratings:
            users.setdefault(user, []).append(item)
        return users


Dataset = Union[TabularDataset, DocSimDataset, RelatednessDataset, AnalogyDataset, RatingsDataset]


# -- TSV reading --------------------------------------------------------------


def _split_uris(text: str) -> tuple[str, ...]:
    return tuple(text.split())


def _read_tsv(path: Path, required: Sequence[str], aliases: dict[str, str] | None = None):
    """Yield ``(line_no, row_dict)``; the header is line 1."""
    aliases = aliases or {}
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise DatasetError(f"cannot open: {exc.strerror}", path) from exc
    with fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError("empty file, expected a header row", path, 1) from None
        header = [aliases.get(h.strip(), h.strip()) for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise DatasetError(f"missing column(s) {', '.join(missing)}; header is {header}", path, 1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) > len(header):
                raise DatasetError(f"{len(row)} fields but header has {len(header)}", path, line)
            row = row + [""] * (len(header) - len(row))
            yield line, dict(zip(header, (c.strip() for c in row)))


def _entity(row: dict, label_col: str, uris_col: str, path: Path, line: int) -> DatasetEntity:
    label = row.get(label_col, "")
    if not label:
        raise DatasetError(f"empty {label_col}", path, line)
    return DatasetEntity(label, _split_uris(row.get(uris_col, "")))


def _float(text: str, col: str, path: Path, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DatasetError(f"{col} {text!r} is not a number", path, line) from None
    if not math.isfinite(value):
        raise DatasetError(f"{col} {text!r} is not finite", path, line)
    return value


def _int(text: str, col: str, path: Path, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise DatasetError(f"{col} {text!r} is not an integer", path, line) from None


_URI_ALIASES = {"uri": "uris"}


def load_tabular(path: str | Path, task_type: str, name: str = "", n_clusters: int | None = None) -> TabularDataset:
    path = Path(path)
    entities, targets = [], []
    for line, row in _read_tsv(path, ("label", "uris", "target"), _URI_ALIASES):
        entities.append(_entity(row, "label", "uris", path, line))
        raw = row["target"]
        if raw == "":
            raise DatasetError("missing target", path, line)
        targets.append(_float(raw, "target", path, line) if task_type == REGRESSION else raw)
    if task_type != REGRESSION and len(set(targets)) < 2:
        raise DatasetError(f"{task_type} needs at least two distinct targets, found {len(set(targets))}", path)
    return TabularDataset(name or path.stem, task_type, entities, targets, n_clusters)


def load_docsim(annotations: str | Path, gold: str | Path, name: str = "") -> DocSimDataset:
    annotations, gold = Path(annotations), Path(gold)
    documents: dict[str, list[DatasetEntity]] = {}
    for line, row in _read_tsv(annotations, ("doc_id", "label", "uris"), _URI_ALIASES):
        if not row["doc_id"]:
            raise DatasetError("empty doc_id", annotations, line)
        documents.setdefault(row["doc_id"], []).append(_entity(row, "label", "uris", annotations, line))
    pairs = []
    for line, row in _read_tsv(gold, ("doc_a", "doc_b", "score")):
        for col in ("doc_a", "doc_b"):
            if row[col] not in documents:
                raise DatasetError(f"{col} {row[col]!r} has no annotations", gold, line)
        pairs.append((row["doc_a"], row["doc_b"], _float(row["score"], "score", gold, line)))
    return DocSimDataset(name or annotations.stem, documents, pairs)


def load_relatedness(path: str | Path, name: str = "") -> RelatednessDataset:
    path = Path(path)
    groups: dict[DatasetEntity, list[tuple[int, DatasetEntity, int]]] = {}
    cols = ("seed_label", "seed_uris", "candidate_label", "candidate_uris", "rank")
    for line, row in _read_tsv(path, cols):
        seed = _entity(row, "seed_label", "seed_uris", path, line)
        cand = _entity(row, "candidate_label", "candidate_uris", path, line)
        groups.setdefault(seed, []).append((_int(row["rank"], "rank", path, line), cand, line))
    seeds = []
    for seed, rows in groups.items():
        ranks = sorted(r for r, _, _ in rows)
        if ranks != list(range(1, len(rows) + 1)):
            dup = [r for r, c in Counter(ranks).items() if c > 1]
            detail = f"duplicate rank {dup[0]}" if dup else f"ranks {ranks} are not 1..{len(rows)}"
            raise DatasetError(f"seed {seed.label!r}: {detail}", path, max(ln for _, _, ln in rows))
        seeds.append((seed, [c for _, c, _ in sorted(rows, key=lambda x: x[0])]))
    return RelatednessDataset(name or path.stem, seeds)


def load_analogies(path: str | Path, name: str = "") -> AnalogyDataset:
    path = Path(path)
    cols = [f"{x}_{part}" for x in "abcd" for part in ("label", "uris")]
    quads = []
    for line, row in _read_tsv(path, cols):
        quads.append(tuple(_entity(row, f"{x}_label", f"{x}_uris", path, line) for x in "abcd"))
    return AnalogyDataset(name or path.stem, quads)


def load_ratings(path: str | Path, threshold: float, name: str = "", k: int = 10, test_ratio: float = 0.2) -> RatingsDataset:
    path = Path(path)
    positives: dict[str, dict[DatasetEntity, float]] = {}
    for line, row in _read_tsv(path, ("user_id", "label", "uris", "rating"), _URI_ALIASES):
        if not row["user_id"]:
            raise DatasetError("empty user_id", path, line)
        item = _entity(row, "label", "uris", path, line)
        rating = _float(row["rating"], "rating", path, line)
        if rating >= threshold:
            positives.setdefault(row["user_id"], {}).setdefault(item, rating)
    ratings, dropped = [], 0
    for user, items in positives.items():
        if len(items) < 2:
            dropped += 1
            continue
        ratings.extend((user, item, r) for item, r in items.items())
    if dropped:
        logger.warning("%s: dropped %d user(s) with fewer than two positive ratings", path, dropped)
    return RatingsDataset(name or path.stem, ratings, threshold, k, test_ratio, dropped)


# -- manifest -----------------------------------------------------------------


class ManifestEntry(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    task_type: str
    path: str
    gold: str | None = None
    threshold: float | None = None
    k: int = Field(10, ge=1)
    test_ratio: float = Field(0.2, gt=0, lt=1)
    n_clusters: int | None = Field(None, ge=1)


class Manifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    datasets: list[ManifestEntry] = Field(default_factory=list)
    base_dir: str = "."

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else Path(self.base_dir) / p


@dataclass(frozen=True)
class TaskSpec:
    task_type: str
    dataset: str
    entry: ManifestEntry


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise DatasetError(f"cannot read manifest: {exc.strerror}", path) from exc
    except yaml.YAMLError as exc:
        raise DatasetError(f"invalid YAML: {exc}", path) from exc
    if not isinstance(raw, dict):
        raise DatasetError("manifest must be a mapping with a 'datasets' list", path)
    raw.setdefault("base_dir", str(path.parent))
    try:
        return Manifest.model_validate(raw)
    except ValidationError as exc:
        raise DatasetError(f"invalid manifest: {exc}", path) from exc


def validate_manifest(manifest: Manifest) -> list[TaskSpec]:
    """Enumerate the (task type, dataset) roster; rejects unknown types and duplicates."""
    roster, seen = [], set()
    for entry in manifest.datasets:
        if entry.task_type not in TASK_TYPES:
            raise DatasetError(f"dataset {entry.name!r}: unknown task type {entry.task_type!r}; expected one of {TASK_TYPES}")
        key = (entry.task_type, entry.name)
        if key in seen:
            raise DatasetError(f"duplicate task ({entry.task_type}, {entry.name})")
        seen.add(key)
        if entry.task_type == DOCUMENT_SIMILARITY and not entry.gold:
            raise DatasetError(f"dataset {entry.name!r}: document_similarity needs a 'gold' file")
        if entry.task_type == RECOMMENDATION and entry.threshold is None:
            raise DatasetError(f"dataset {entry.name!r}: recommendation needs a rating 'threshold'")
        roster.append(TaskSpec(entry.task_type, entry.name, entry))
    if not roster:
        logger.warning("manifest lists no tasks")
    return roster


def load_dataset(entry: ManifestEntry, base_dir: str | Path = ".") -> Dataset:
    def resolve(rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else Path(base_dir) / p

    t = entry.task_type
    if t in TABULAR_TASKS:
        return load_tabular(resolve(entry.path), t, entry.name, entry.n_clusters)
    if t == DOCUMENT_SIMILARITY:
        if not entry.gold:
            raise DatasetError(f"dataset {entry.name!r}: document_similarity needs a 'gold' file")
        return load_docsim(resolve(entry.path), resolve(entry.gold), entry.name)
    if t == ENTITY_RELATEDNESS:
        return load_relatedness(resolve(entry.path), entry.name)
    if t == SEMANTIC_ANALOGIES:
        return load_analogies(resolve(entry.path), entry.name)
    if t == RECOMMENDATION:
        if entry.threshold is None:
            raise DatasetError(f"dataset {entry.name!r}: recommendation needs a rating 'threshold'")
        return load_ratings(resolve(entry.path), entry.threshold, entry.name, entry.k, entry.test_ratio)
    raise DatasetError(f"unknown task type {t!r}")


# -- entity pool --------------------------------------------------------------


class EntityPool:
    """Deduplicated dataset entities keyed by (label, URI set), ids in first-seen order."""

    def __init__(self, entities: Iterable[DatasetEntity] = ()):
        self._ids: dict[tuple, int] = {}
        self.entities: list[DatasetEntity] = []
        for e in entities:
            self.add(e)

    def add(self, entity: DatasetEntity) -> int:
        eid = self._ids.get(entity.key)
        if eid is None:
            eid = self._ids[entity.key] = len(self.entities)
            self.entities.append(entity)
        return eid

    def id_of(self, entity: DatasetEntity) -> int:
        return self._ids[entity.key]

    def __len__(self) -> int:
        return len(self.entities)

    def __iter__(self) -> Iterator[DatasetEntity]:
        return iter(self.entities)

    def as_dict(self) -> dict[int, DatasetEntity]:
        return dict(enumerate(self.entities))


def collect_entities(datasets: Iterable[Dataset]) -> EntityPool:
    pool = EntityPool()
    for ds in datasets:
        for e in ds.iter_entities():
            pool.add(e)
    return pool
