"""Semantic label embeddings: loading, validation and a seeded fallback.

Tables are plain JSON (``{"objects": {label: [...]}, "relations": {...}}``) or a
JSON index pointing at a raw little-endian float32 sidecar::

    {"dim": 768, "data": "table.bin",
     "objects": {"cup": 0, ...}, "relations": {"on": 151, ...}}

where each integer is a row offset into the ``rows x dim`` sidecar.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EMBED_DIM = 768
KINDS = ("object", "relation")


class EmbeddingFormatError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingTable:
    object_vectors: dict[str, np.ndarray] = field(default_factory=dict)
    relation_vectors: dict[str, np.ndarray] = field(default_factory=dict)
    dim: int = EMBED_DIM
    duplicates: int = 0

    def __len__(self) -> int:
        return len(self.object_vectors) + len(self.relation_vectors)

    def vectors(self, kind: str) -> dict[str, np.ndarray]:
        if kind == "object":
            return self.object_vectors
        if kind == "relation":
            return self.relation_vectors
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")


@dataclass(frozen=True)
class ForegroundQuery:
    category_label: str
    embedding: np.ndarray
    fg_width: float
    fg_height: float

    def __post_init__(self):
        if self.fg_width <= 0 or self.fg_height <= 0:
            raise ValueError(f"foreground size must be positive, got {self.fg_width}x{self.fg_height}")
        if not np.all(np.isfinite(self.embedding)):
            raise ValueError("foreground embedding has non-finite entries")


def _pairs_counting_duplicates(counter):
    def hook(pairs):
        out = {}
        for k, v in pairs:
            if k in out:
                counter[0] += 1
            out[k] = v
        return out
    return hook


def _check_vector(label: str, values, dim: int) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float32)
    if vec.ndim != 1 or vec.shape[0] != dim:
        raise EmbeddingFormatError(f"vector for {label!r} has shape {vec.shape}, expected ({dim},)")
    if not np.all(np.isfinite(vec)):
        raise EmbeddingFormatError(f"vector for {label!r} has non-finite entries")
    return vec


def load_embedding_table(path, dim: int = EMBED_DIM) -> EmbeddingTable:
    """Read a JSON table (or JSON index + float32 sidecar).

    An empty file yields an empty table. Duplicate labels keep the last value;
    the number of overwritten entries is reported in ``duplicates``.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        return EmbeddingTable(dim=dim)
    dupes = [0]
    try:
        doc = json.loads(text, object_pairs_hook=_pairs_counting_duplicates(dupes))
    except json.JSONDecodeError as exc:
        raise EmbeddingFormatError(f"line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise EmbeddingFormatError("top-level value must be an object")

    if "data" in doc:
        dim = int(doc.get("dim", dim))
        raw = np.fromfile(path.parent / doc["data"], dtype="<f4")
        if raw.size % dim:
            raise EmbeddingFormatError(f"sidecar size {raw.size} is not a multiple of dim {dim}")
        rows = raw.reshape(-1, dim)

        def decode(section):
            out = {}
            for label, row in doc.get(section, {}).items():
                if not isinstance(row, int) or not 0 <= row < len(rows):
                    raise EmbeddingFormatError(f"row index for {label!r} out of range")
                out[label] = _check_vector(label, rows[row], dim)
            return out
    else:
        def decode(section):
            return {label: _check_vector(label, vals, dim) for label, vals in doc.get(section, {}).items()}

    return EmbeddingTable(decode("objects"), decode("relations"), dim, dupes[0])


def save_embedding_table(table: EmbeddingTable, path, sidecar: bool = False) -> None:
    path = Path(path)
    if not sidecar:
        doc = {
            "objects": {k: v.astype(float).tolist() for k, v in table.object_vectors.items()},
            "relations": {k: v.astype(float).tolist() for k, v in table.relation_vectors.items()},
        }
        path.write_text(json.dumps(doc), encoding="utf-8")
        return
    data_name = path.with_suffix(".bin").name
    rows, index = [], {"dim": table.dim, "data": data_name, "objects": {}, "relations": {}}
    for section, vecs in (("objects", table.object_vectors), ("relations", table.relation_vectors)):
        for label, vec in vecs.items():
            index[section][label] = len(rows)
            rows.append(vec)
    arr = np.stack(rows).astype("<f4") if rows else np.zeros((0, table.dim), "<f4")
    arr.tofile(path.parent / data_name)
    path.write_text(json.dumps(index), encoding="utf-8")


def fallback_embedding(label: str, kind: str, seed: int = 0, dim: int = EMBED_DIM) -> np.ndarray:
    """Unit-norm Gaussian direction keyed on a SHA-256 of ``(kind, label, seed)``."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    digest = hashlib.sha256(f"{kind}\x00{label}\x00{seed}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:16], "little"))
    vec = rng.standard_normal(dim)
    return (vec / np.linalg.norm(vec)).astype(np.float32)


def lookup(table: EmbeddingTable, label: str, kind: str, seed: int = 0) -> np.ndarray:
    vec = table.vectors(kind).get(label)
    if vec is not None:
        return vec
    return fallback_embedding(label, kind, seed, table.dim)
