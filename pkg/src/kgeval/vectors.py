"""Entity vector sets and their on-disk formats.

Binary layout (all little-endian)::

    b"KGEV1"
    uint8   length of model kind tag, followed by the ASCII tag
    uint32  dimension d
    uint64  number of records n
    32 B    SHA-256 digest of the training config
    n x (int64 entity id, d x float32)

A TSV export (``IRI<TAB>space-separated floats``) is provided for tools that
cannot read the binary file.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

MAGIC = b"KGEV1"
_HEADER = struct.Struct("<IQ32s")


class VectorFileError(ValueError):
    pass


def config_hash(config: Mapping[str, Any]) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


@dataclass
class EmbeddingSet:
    """One float32 vector per entity id, ids strictly ascending."""

    ids: np.ndarray
    vectors: np.ndarray
    kind: str
    config_hash: str = field(default="0" * 64)

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != self.ids.shape[0]:
            raise VectorFileError(
                f"expected {self.ids.shape[0]} rows, got vectors of shape {self.vectors.shape}"
            )
        if self.ids.size > 1 and not (np.diff(self.ids) > 0).all():
            raise VectorFileError("entity ids must be strictly ascending")
        if not np.isfinite(self.vectors).all():
            raise VectorFileError("vectors contain non-finite values")
        self._pos = {int(e): i for i, e in enumerate(self.ids)}

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def __contains__(self, entity_id: int) -> bool:
        return int(entity_id) in self._pos

    def position(self, entity_id: int) -> int:
        return self._pos[int(entity_id)]

    def vector(self, entity_id: int) -> np.ndarray:
        return self.vectors[self._pos[int(entity_id)]]

    def scaled(self, factor: float) -> EmbeddingSet:
        return EmbeddingSet(self.ids, self.vectors * np.float32(factor), self.kind, self.config_hash)


def save_vectors(emb: EmbeddingSet, path: str | Path) -> None:
    tag = emb.kind.encode("ascii")
    records = np.empty(len(emb), dtype=np.dtype([("id", "<i8"), ("vec", "<f4", (emb.dim,))]))
    records["id"] = emb.ids
    records["vec"] = emb.vectors
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", len(tag)))
        fh.write(tag)
        fh.write(_HEADER.pack(emb.dim, len(emb), bytes.fromhex(emb.config_hash)))
        fh.write(records.tobytes())


def load_vectors(path: str | Path) -> EmbeddingSet:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise VectorFileError(f"{path}: not a vector file (bad magic)")
    pos = len(MAGIC)
    try:
        (tag_len,) = struct.unpack_from("<B", data, pos)
        pos += 1
        kind = data[pos : pos + tag_len].decode("ascii")
        pos += tag_len
        dim, n, digest = _HEADER.unpack_from(data, pos)
    except struct.error as exc:
        raise VectorFileError(f"{path}: truncated header") from exc
    pos += _HEADER.size
    dtype = np.dtype([("id", "<i8"), ("vec", "<f4", (dim,))])
    expected = n * dtype.itemsize
    body = data[pos:]
    if len(body) < expected:
        raise VectorFileError(
            f"{path}: truncated, header says {n} records but only {len(body) // dtype.itemsize} present"
        )
    if len(body) > expected:
        raise VectorFileError(f"{path}: {len(body) - expected} trailing bytes; dimension mismatch?")
    records = np.frombuffer(body, dtype=dtype, count=n)
    return EmbeddingSet(records["id"].copy(), records["vec"].copy(), kind, digest.hex())


def save_tsv(emb: EmbeddingSet, path: str | Path, entity_iris: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for eid, vec in zip(emb.ids.tolist(), emb.vectors):
            fh.write(entity_iris[eid] + "\t" + " ".join(repr(float(x)) for x in vec) + "\n")


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity; rows with zero norm have similarity 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    nb = np.linalg.norm(b, axis=-1, keepdims=True)
    a = np.divide(a, na, out=np.zeros_like(a), where=na > 0)
    b = np.divide(b, nb, out=np.zeros_like(b), where=nb > 0)
    return a @ b.T


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    return float(cosine_matrix(np.atleast_2d(u), np.atleast_2d(v))[0, 0])
