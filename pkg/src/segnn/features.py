"""Node feature construction: text embeddings plus node-type codes.

Embedding providers answer per node: the built-in hashing provider is a pure
function of the node text, while precomputed providers (written by the
exporter or by `segnn featurize`) answer by node key lookup.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Protocol

import numpy as np

from .errors import EmbeddingFormatError, MissingEmbeddingError, SegnnError
from .graphs import CommGraph, NodeLabel

EMBEDDING_MAGIC = b"SEEMB1"

# Binary type code of Table-6 form: one-hot position per node label.
_TYPE_INDEX = {
    NodeLabel.USER: 0,
    NodeLabel.COMMENT: 1,
    NodeLabel.ANSWER: 2,
    NodeLabel.QUESTION: 3,
}
TYPE_DIM = 4


class FeatureMode(Enum):
    TEXT_PLUS_TYPE = "text+type"
    TEXT_ONLY = "text"
    TYPE_ONLY = "type"

    @classmethod
    def parse(cls, s: str) -> "FeatureMode":
        for mode in cls:
            if mode.value == s:
                return mode
        raise SegnnError(
            f"unknown feature mode {s!r}; expected one of "
            f"{', '.join(m.value for m in cls)}"
        )

    def dimension(self, d_text: int) -> int:
        if self is FeatureMode.TEXT_PLUS_TYPE:
            return d_text + TYPE_DIM
        if self is FeatureMode.TEXT_ONLY:
            return d_text
        return TYPE_DIM


def type_one_hot(label: NodeLabel) -> np.ndarray:
    vec = np.zeros(TYPE_DIM)
    vec[_TYPE_INDEX[label]] = 1.0
    return vec


_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


def hash_embed(text: str, d: int) -> np.ndarray:
    """Signed feature hashing of lowercased word unigrams and bigrams.

    L2-normalized; empty or whitespace-only text maps to the zero vector.
    Stable across processes and platforms (keyed blake2b, not builtin hash).
    """
    if d < 1:
        raise SegnnError(f"embedding dimension must be >= 1, got {d}")
    tokens = _TOKEN_RE.findall(text.lower())
    vec = np.zeros(d)
    if not tokens:
        return vec
    grams = tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
    for gram in grams:
        h = int.from_bytes(
            hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest(), "little"
        )
        sign = 1.0 if h & 1 == 0 else -1.0
        vec[(h >> 1) % d] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


class EmbeddingProvider(Protocol):
    d_text: int

    def vector_for(self, key: str, text: str) -> np.ndarray: ...


class HashingEmbedder:
    """Deterministic self-contained substitute for a pretrained text encoder."""

    def __init__(self, d_text: int = 384):
        self.d_text = d_text

    def vector_for(self, key: str, text: str) -> np.ndarray:
        return hash_embed(text, self.d_text)


@dataclass
class PrecomputedEmbeddings:
    d_text: int
    vectors: dict

    def vector_for(self, key: str, text: str) -> np.ndarray:
        try:
            return self.vectors[key]
        except KeyError:
            raise MissingEmbeddingError(key) from None


def write_embeddings(path, d: int, records: Iterable[tuple[str, np.ndarray]]):
    """Write the bit-exact embedding file: magic, u32 dim, u64 count, records."""
    items = list(records)
    keys = set()
    for key, _ in items:
        if key in keys:
            raise EmbeddingFormatError(f"duplicate node key {key!r}")
        keys.add(key)
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<I", d))
        fh.write(struct.pack("<Q", len(items)))
        for key, vec in items:
            vec = np.asarray(vec, dtype=np.float32)
            if vec.shape != (d,):
                raise EmbeddingFormatError(
                    f"vector for {key!r} has shape {vec.shape}, expected ({d},)"
                )
            encoded = key.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise EmbeddingFormatError(f"node key too long: {key[:60]!r}...")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(vec.astype("<f4").tobytes())


def load_precomputed(path) -> PrecomputedEmbeddings:
    """Load an SEEMB1 file; vectors are widened to float64."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 18 or data[:6] != EMBEDDING_MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic, not an SEEMB1 file")
    d = struct.unpack_from("<I", data, 6)[0]
    count = struct.unpack_from("<Q", data, 10)[0]
    offset = 18
    vectors: dict = {}
    for _ in range(count):
        if offset + 2 > len(data):
            raise EmbeddingFormatError(f"{path}: truncated record header")
        (key_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        end = offset + key_len + 4 * d
        if end > len(data):
            raise EmbeddingFormatError(
                f"{path}: truncated record (dim mismatch vs header?)"
            )
        key = data[offset : offset + key_len].decode("utf-8")
        offset += key_len
        vec = np.frombuffer(data[offset : offset + 4 * d], dtype="<f4").astype(
            np.float64
        )
        offset += 4 * d
        if key in vectors:
            raise EmbeddingFormatError(f"{path}: duplicate node key {key!r}")
        vectors[key] = vec
    if offset != len(data):
        raise EmbeddingFormatError(f"{path}: trailing bytes after last record")
    return PrecomputedEmbeddings(d_text=d, vectors=vectors)


def node_key(label: NodeLabel, source_id: str) -> str:
    return f"{label.value}:{source_id}"


def build_features(
    g: CommGraph, mode: FeatureMode, provider: EmbeddingProvider | None = None
) -> np.ndarray:
    """Per-node feature matrix in graph node order.

    Row i is embed(text_i) ++ one_hot(label_i) for TEXT_PLUS_TYPE, or the
    respective block alone for the other modes.
    """
    nodes = g.graph.nodes
    if mode is not FeatureMode.TYPE_ONLY and provider is None:
        raise SegnnError(f"feature mode {mode.value} needs an embedding provider")
    out = np.zeros((len(nodes), mode.dimension(provider.d_text if provider else 0)))
    for i, node in enumerate(nodes):
        blocks = []
        if mode is not FeatureMode.TYPE_ONLY:
            key = node_key(node.label, node.props["id"])
            try:
                vec = provider.vector_for(key, node.props["text"])
            except MissingEmbeddingError:
                raise
            except Exception as exc:
                raise SegnnError(f"embedding failed for node {key}: {exc}") from exc
            blocks.append(np.asarray(vec, dtype=np.float64))
        if mode is not FeatureMode.TEXT_ONLY:
            blocks.append(type_one_hot(node.label))
        row = np.concatenate(blocks)
        if row.shape != (out.shape[1],):
            raise SegnnError(
                f"provider dimension changed mid-corpus: row {row.shape} "
                f"vs matrix width {out.shape[1]}"
            )
        out[i] = row
    if not np.all(np.isfinite(out)):
        raise SegnnError("feature matrix contains non-finite values")
    return out
