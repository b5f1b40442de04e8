"""Approximate nearest-neighbour search with a hierarchical navigable small world graph.

Graph construction and layer search are compiled with numba. Final result
lists are always re-scored with numpy so that distances (and therefore the
``(distance, id)`` ordering) agree bit-for-bit with :func:`brute_force_knn`.
"""

from __future__ import annotations

import heapq
import struct
from pathlib import Path

import numba
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .vectors import EmbeddingSet

METRICS = ("cosine", "l2")
_INDEX_MAGIC = b"KGHNSW"
_INDEX_VERSION = 1
# below this many vectors tasks search exhaustively instead of using the index
BRUTE_FORCE_LIMIT = 10_000


class ANNIndexError(ValueError):
    pass


def _prepare(x: np.ndarray, metric: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if metric == "cosine":
        norms = np.linalg.norm(x, axis=-1, keepdims=True)
        x = np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)
    return np.ascontiguousarray(x)


def _distances(data: np.ndarray, q: np.ndarray, metric: str) -> np.ndarray:
    if metric == "cosine":
        d = 1.0 - data @ q
    else:
        diff = data - q
        d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    d = np.maximum(d, 0.0)
    # identical directions are distance 0 up to rounding
    d[d < 1e-12] = 0.0
    return d


def _rank(ids: np.ndarray, dists: np.ndarray, k: int) -> list[tuple[int, float]]:
    order = np.lexsort((ids, dists))[:k]
    return [(int(ids[i]), float(dists[i])) for i in order]


@numba.njit(cache=True)
def _dist(data, i, q, metric):
    s = 0.0
    if metric == 0:
        for j in range(q.shape[0]):
            s += data[i, j] * q[j]
        return 1.0 - s
    for j in range(q.shape[0]):
        t = data[i, j] - q[j]
        s += t * t
    return s


@numba.njit(cache=True)
def _neighbors(node, layer, links0, cnt0, ulinks, ucnt, slot):
    if layer == 0:
        return links0[node, : cnt0[node]]
    s = slot[node]
    return ulinks[s, layer - 1, : ucnt[s, layer - 1]]


@numba.njit(cache=True)
def _search_layer(data, q, entries, ef, layer, links0, cnt0, ulinks, ucnt, slot, visited, tag, metric):
    """Best-first beam search on one layer; returns (dist, id) sorted ascending."""
    cand = [(0.0, np.int64(0))]
    cand.pop()
    res = [(0.0, np.int64(0))]
    res.pop()
    for e in entries:
        if visited[e] == tag:
            continue
        visited[e] = tag
        d = _dist(data, e, q, metric)
        heapq.heappush(cand, (d, np.int64(e)))
        heapq.heappush(res, (-d, -np.int64(e)))
        if len(res) > ef:
            heapq.heappop(res)
    while len(cand) > 0:
        d_c, c = heapq.heappop(cand)
        if d_c > -res[0][0] and len(res) >= ef:
            break
        for e in _neighbors(c, layer, links0, cnt0, ulinks, ucnt, slot):
            if visited[e] == tag:
                continue
            visited[e] = tag
            d = _dist(data, e, q, metric)
            if len(res) < ef or d < -res[0][0]:
                heapq.heappush(cand, (d, np.int64(e)))
                heapq.heappush(res, (-d, -np.int64(e)))
                if len(res) > ef:
                    heapq.heappop(res)
    out = [(-d, -i) for d, i in res]
    out.sort()
    return out


@numba.njit(cache=True)
def _select(data, cands, m, metric):
    """Neighbour selection heuristic: keep a candidate only if it is closer to
    the base point than to every neighbour already kept."""
    kept = np.empty(m, dtype=np.int64)
    n_kept = 0
    for d_c, c in cands:
        if n_kept >= m:
            break
        good = True
        for j in range(n_kept):
            if _dist(data, c, data[kept[j]], metric) < d_c:
                good = False
                break
        if good:
            kept[n_kept] = c
            n_kept += 1
    return kept[:n_kept]


@numba.njit(cache=True)
def _set_links(node, layer, new, links0, cnt0, ulinks, ucnt, slot):
    if layer == 0:
        cnt0[node] = new.shape[0]
        links0[node, : new.shape[0]] = new
    else:
        s = slot[node]
        ucnt[s, layer - 1] = new.shape[0]
        ulinks[s, layer - 1, : new.shape[0]] = new


@numba.njit(cache=True)
def _build(data, levels, m, ef_construction, metric, links0, cnt0, ulinks, ucnt, slot):
    n = data.shape[0]
    visited = np.zeros(n, dtype=np.int64)
    tag = 0
    entry = 0
    max_level = levels[0]
    for i in range(1, n):
        q = data[i]
        level = levels[i]
        cur = entry
        d_cur = _dist(data, cur, q, metric)
        for layer in range(max_level, level, -1):
            changed = True
            while changed:
                changed = False
                for e in _neighbors(cur, layer, links0, cnt0, ulinks, ucnt, slot):
                    d = _dist(data, e, q, metric)
                    if d < d_cur or (d == d_cur and e < cur):
                        d_cur = d
                        cur = e
                        changed = True
        entries = np.array([cur], dtype=np.int64)
        for layer in range(min(level, max_level), -1, -1):
            tag += 1
            found = _search_layer(
                data, q, entries, ef_construction, layer, links0, cnt0, ulinks, ucnt, slot, visited, tag, metric
            )
            chosen = _select(data, found, m, metric)
            _set_links(i, layer, chosen, links0, cnt0, ulinks, ucnt, slot)
            cap = 2 * m if layer == 0 else m
            for nb in chosen:
                current = _neighbors(nb, layer, links0, cnt0, ulinks, ucnt, slot)
                if current.shape[0] < cap:
                    grown = np.empty(current.shape[0] + 1, dtype=np.int64)
                    grown[:-1] = current
                    grown[-1] = i
                    _set_links(nb, layer, grown, links0, cnt0, ulinks, ucnt, slot)
                else:
                    pool = [(_dist(data, i, data[nb], metric), np.int64(i))]
                    for e in current:
                        pool.append((_dist(data, e, data[nb], metric), np.int64(e)))
                    pool.sort()
                    _set_links(nb, layer, _select(data, pool, cap, metric), links0, cnt0, ulinks, ucnt, slot)
            entries = np.empty(len(found), dtype=np.int64)
            for j in range(len(found)):
                entries[j] = found[j][1]
        if level > max_level:
            max_level = level
            entry = i
    return entry, max_level


@numba.njit(cache=True)
def _query(data, q, k_ef, entry, max_level, links0, cnt0, ulinks, ucnt, slot, metric):
    visited = np.zeros(data.shape[0], dtype=np.int64)
    cur = entry
    d_cur = _dist(data, cur, q, metric)
    for layer in range(max_level, 0, -1):
        changed = True
        while changed:
            changed = False
            for e in _neighbors(cur, layer, links0, cnt0, ulinks, ucnt, slot):
                d = _dist(data, e, q, metric)
                if d < d_cur or (d == d_cur and e < cur):
                    d_cur = d
                    cur = e
                    changed = True
    found = _search_layer(
        data, q, np.array([cur], dtype=np.int64), k_ef, 0, links0, cnt0, ulinks, ucnt, slot, visited, 1, metric
    )
    out = np.empty(len(found), dtype=np.int64)
    for j in range(len(found)):
        out[j] = found[j][1]
    return out


class HNSWIndex(BaseEstimator):
    """Layered proximity-graph index.

    Parameters
    ----------
    M : int
        Maximum neighbours per node on upper layers (``2 * M`` on layer 0).
    ef_construction : int
        Beam width while inserting.
    metric : {"cosine", "l2"}
    random_state : int
        Seed for the level assignment.
    """

    def __init__(self, M: int = 16, ef_construction: int = 200, metric: str = "cosine", random_state: int = 0):
        self.M = M
        self.ef_construction = ef_construction
        self.metric = metric
        self.random_state = random_state

    def fit(self, X, ids=None) -> HNSWIndex:
        if self.metric not in METRICS:
            raise ANNIndexError(f"unknown metric {self.metric!r}")
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ANNIndexError("need a non-empty 2-D array of vectors")
        n = X.shape[0]
        self.ids_ = np.arange(n, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
        self.data_ = _prepare(X, self.metric)
        rng = np.random.default_rng(self.random_state)
        ml = 1.0 / np.log(max(self.M, 2))
        levels = np.floor(-np.log(1.0 - rng.random(n)) * ml).astype(np.int64)
        self.levels_ = levels
        top = int(levels.max())
        slot = np.full(n, -1, dtype=np.int64)
        upper = np.flatnonzero(levels > 0)
        slot[upper] = np.arange(upper.size)
        self.slot_ = slot
        self.links0_ = np.full((n, 2 * self.M), -1, dtype=np.int64)
        self.cnt0_ = np.zeros(n, dtype=np.int64)
        self.ulinks_ = np.full((max(upper.size, 1), max(top, 1), self.M), -1, dtype=np.int64)
        self.ucnt_ = np.zeros((max(upper.size, 1), max(top, 1)), dtype=np.int64)
        self.entry_, self.max_level_ = _build(
            self.data_, levels, self.M, self.ef_construction, self._metric_code(),
            self.links0_, self.cnt0_, self.ulinks_, self.ucnt_, self.slot_,
        )
        return self

    def _metric_code(self) -> int:
        return 0 if self.metric == "cosine" else 1

    @property
    def dim(self) -> int:
        return int(self.data_.shape[1])

    def __len__(self) -> int:
        return int(self.data_.shape[0])

    def kneighbors(self, query, k: int, ef_search: int = 100) -> list[tuple[int, float]]:
        """Up to ``k`` ``(id, distance)`` pairs, ascending distance then id."""
        check_is_fitted(self, "data_")
        if k < 1:
            raise ANNIndexError("k must be at least 1")
        q = _prepare(np.asarray(query).reshape(1, -1), self.metric)[0]
        if q.shape[0] != self.dim:
            raise ANNIndexError(f"query has dimension {q.shape[0]}, index has {self.dim}")
        k = min(k, len(self))
        ef = max(ef_search, k)
        found = _query(
            self.data_, q, ef, self.entry_, self.max_level_,
            self.links0_, self.cnt0_, self.ulinks_, self.ucnt_, self.slot_, self._metric_code(),
        )
        dists = _distances(self.data_[found], q, self.metric)
        return _rank(self.ids_[found], dists, k)

    def save(self, path: str | Path) -> None:
        check_is_fitted(self, "data_")
        with open(path, "wb") as fh:
            fh.write(_INDEX_MAGIC)
            fh.write(struct.pack("<HBIIqq", _INDEX_VERSION, self._metric_code(), self.M,
                                 self.ef_construction, self.entry_, self.max_level_))
            for arr in (self.ids_, self.data_, self.levels_, self.slot_, self.links0_, self.cnt0_,
                        self.ulinks_, self.ucnt_):
                np.save(fh, arr, allow_pickle=False)

    @classmethod
    def load(cls, path: str | Path) -> HNSWIndex:
        with open(path, "rb") as fh:
            if fh.read(len(_INDEX_MAGIC)) != _INDEX_MAGIC:
                raise ANNIndexError(f"{path}: not an index file")
            header = struct.Struct("<HBIIqq")
            version, metric, m, efc, entry, max_level = header.unpack(fh.read(header.size))
            if version != _INDEX_VERSION:
                raise ANNIndexError(f"{path}: unsupported index version {version}")
            index = cls(M=m, ef_construction=efc, metric=METRICS[metric])
            (index.ids_, index.data_, index.levels_, index.slot_, index.links0_, index.cnt0_,
             index.ulinks_, index.ucnt_) = (np.load(fh, allow_pickle=False) for _ in range(8))
        index.entry_, index.max_level_ = int(entry), int(max_level)
        return index


class BruteForceIndex(BaseEstimator):
    """Exact linear scan with the same interface and tie rule as :class:`HNSWIndex`."""

    def __init__(self, metric: str = "cosine"):
        self.metric = metric

    def fit(self, X, ids=None) -> BruteForceIndex:
        if self.metric not in METRICS:
            raise ANNIndexError(f"unknown metric {self.metric!r}")
        X = np.asarray(X).reshape(len(X), -1) if len(X) else np.zeros((0, 0))
        self.ids_ = np.arange(X.shape[0], dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
        self.data_ = _prepare(X, self.metric)
        return self

    def __len__(self) -> int:
        return int(self.data_.shape[0])

    def kneighbors(self, query, k: int, ef_search: int | None = None) -> list[tuple[int, float]]:
        check_is_fitted(self, "data_")
        if len(self) == 0:
            return []
        q = _prepare(np.asarray(query).reshape(1, -1), self.metric)[0]
        if q.shape[0] != self.data_.shape[1]:
            raise ANNIndexError(f"query has dimension {q.shape[0]}, index has {self.data_.shape[1]}")
        return _rank(self.ids_, _distances(self.data_, q, self.metric), max(k, 0))


def build_index(
    embeddings: EmbeddingSet, M: int = 16, ef_construction: int = 200, metric: str = "cosine", seed: int = 0
) -> HNSWIndex:
    # EmbeddingSet ids are ascending, which fixes the insertion order
    return HNSWIndex(M, ef_construction, metric, seed).fit(embeddings.vectors, embeddings.ids)


def knn(index: HNSWIndex, query, k: int, ef_search: int = 100) -> list[tuple[int, float]]:
    if ef_search < k:
        raise ANNIndexError("ef_search must be >= k")
    return index.kneighbors(query, k, ef_search)


def brute_force_knn(embeddings: EmbeddingSet, query, k: int, metric: str = "cosine") -> list[tuple[int, float]]:
    if len(embeddings) == 0:
        return []
    return BruteForceIndex(metric).fit(embeddings.vectors, embeddings.ids).kneighbors(query, k)


def neighbor_index(embeddings: EmbeddingSet, metric: str = "cosine", seed: int = 0, **hnsw_params):
    """HNSW above :data:`BRUTE_FORCE_LIMIT` vectors, exact scan otherwise."""
    if len(embeddings) <= BRUTE_FORCE_LIMIT:
        return BruteForceIndex(metric).fit(embeddings.vectors, embeddings.ids)
    return HNSWIndex(metric=metric, random_state=seed, **hnsw_params).fit(embeddings.vectors, embeddings.ids)
