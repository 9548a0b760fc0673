"""Embedding providers and an exact-cosine flat vector index.

Two providers: "hashed" feature-hashes normalized terms into a fixed
number of buckets with deterministic signs, so the whole retrieval stack
runs offline with no model weights; "remote" speaks the OpenAI-compatible
embeddings HTTP protocol. The index is brute-force cosine over unit
vectors: exact, and cheap at desk-scale corpus sizes.

Vectors are quantized to float32 at build time so that search scores are
bit-identical before and after a snapshot round-trip.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np
import requests

from .chunker import Chunk
from .errors import DimensionMismatchError, DuplicateChunkIdError, EmptyCorpusError, \
    ProviderUnreachableError
from .lexindex import SEMANTIC, ScoredHit, normalize_terms

_SNAPSHOT_MAGIC = b"RQVX"
_SNAPSHOT_VERSION = 1


def hash_embed(text: str, dim: int) -> np.ndarray:
    """Deterministic feature-hash embedding, L2-normalized.

    Each normalized term is hashed into one of dim buckets with a +/-1 sign
    drawn from a second hash byte. Text with no terms maps to the unit
    basis vector e0.
    """
    if dim < 8:
        raise ValueError("dim must be >= 8")
    vec = np.zeros(dim, dtype=np.float64)
    for term in normalize_terms(text):
        digest = hashlib.blake2b(term.encode("utf-8"), digest_size=16).digest()
        bucket = int.from_bytes(digest[:8], "little") % dim
        sign = 1.0 if digest[8] & 1 else -1.0
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        vec[0] = 1.0
        return vec
    return vec / norm


@dataclass(frozen=True)
class EmbeddingProvider:
    kind: str  # "remote" | "hashed"
    dim: int
    endpoint: str | None = None
    model_name: str | None = None
    timeout: float = 30.0
    api_key: str | None = None

    def __post_init__(self):
        if self.kind not in ("remote", "hashed"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.dim < 8:
            raise ValueError("dim must be >= 8")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote provider requires an endpoint")

    @property
    def fingerprint(self) -> str:
        return f"{self.kind}:{self.model_name or 'terms'}:{self.dim}"


def _normalize_rows(vectors: list[list[float]], dim: int) -> list[np.ndarray]:
    out = []
    for raw in vectors:
        if len(raw) != dim:
            raise DimensionMismatchError(
                f"endpoint returned dim {len(raw)}, expected {dim}")
        vec = np.asarray(raw, dtype=np.float64)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            vec = np.zeros(dim, dtype=np.float64)
            vec[0] = 1.0
        else:
            vec = vec / norm
        out.append(vec)
    return out


def _remote_embed(provider: EmbeddingProvider, texts: list[str]) -> list[np.ndarray]:
    url = provider.endpoint.rstrip("/") + "/embeddings"
    headers = {}
    if provider.api_key:
        headers["Authorization"] = f"Bearer {provider.api_key}"
    try:
        resp = requests.post(
            url,
            json={"model": provider.model_name or "", "input": texts},
            headers=headers,
            timeout=provider.timeout,
        )
    except requests.RequestException as exc:
        raise ProviderUnreachableError(f"embeddings endpoint {url}: {exc}") from exc
    if resp.status_code != 200:
        raise ProviderUnreachableError(
            f"embeddings endpoint {url}: HTTP {resp.status_code}")
    try:
        data = resp.json()["data"]
        rows = sorted(data, key=lambda item: item["index"])
        raw = [row["embedding"] for row in rows]
    except (KeyError, TypeError, ValueError) as exc:
        raise ProviderUnreachableError(
            f"embeddings endpoint {url}: malformed response ({exc})") from exc
    if len(raw) != len(texts):
        raise ProviderUnreachableError(
            f"embeddings endpoint {url}: {len(raw)} vectors for {len(texts)} inputs")
    return _normalize_rows(raw, provider.dim)


def embed_batch(provider: EmbeddingProvider, texts: list[str]) -> list[np.ndarray]:
    """Embed texts in order; every returned vector is unit-norm."""
    if not texts:
        raise ValueError("texts must be non-empty")
    if provider.kind == "hashed":
        return [hash_embed(t, provider.dim) for t in texts]
    return _remote_embed(provider, texts)


class VectorIndex:
    """Flat store of unit vectors keyed by chunk_id, searched exactly."""

    def __init__(self, entries: dict[str, np.ndarray], dim: int, provider_fingerprint: str):
        self.dim = dim
        self.provider_fingerprint = provider_fingerprint
        self._ids = sorted(entries)
        self._matrix = np.zeros((len(self._ids), dim), dtype=np.float32)
        for i, cid in enumerate(self._ids):
            vec = entries[cid]
            if len(vec) != dim:
                raise DimensionMismatchError(
                    f"vector for {cid!r} has dim {len(vec)}, index dim is {dim}")
            self._matrix[i] = np.asarray(vec, dtype=np.float32)

    def __len__(self) -> int:
        return len(self._ids)

    def chunk_ids(self) -> set[str]:
        return set(self._ids)

    @property
    def entries(self) -> dict[str, np.ndarray]:
        return {cid: self._matrix[i].copy() for i, cid in enumerate(self._ids)}

    def vector(self, chunk_id: str) -> np.ndarray:
        return self._matrix[self._ids.index(chunk_id)].copy()


def build_vector_index(chunks: list[Chunk], provider: EmbeddingProvider) -> VectorIndex:
    if not chunks:
        raise EmptyCorpusError("cannot index an empty chunk list")
    seen = set()
    for chunk in chunks:
        if chunk.chunk_id in seen:
            raise DuplicateChunkIdError(f"duplicate chunk_id {chunk.chunk_id!r}")
        seen.add(chunk.chunk_id)
    vectors = embed_batch(provider, [c.text for c in chunks])
    entries = {c.chunk_id: v for c, v in zip(chunks, vectors)}
    return VectorIndex(entries, provider.dim, provider.fingerprint)


def vector_search(index: VectorIndex, query_vec: np.ndarray, k: int) -> list[ScoredHit]:
    """Exact cosine against every entry; top-k by score, ties by chunk_id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    query_vec = np.asarray(query_vec, dtype=np.float64)
    if query_vec.shape != (index.dim,):
        raise DimensionMismatchError(
            f"query dim {query_vec.shape} does not match index dim {index.dim}")
    if len(index) == 0:
        return []
    norm = float(np.linalg.norm(query_vec))
    if norm > 0.0:
        query_vec = query_vec / norm
    scores = index._matrix.astype(np.float64) @ query_vec
    order = sorted(range(len(index)), key=lambda i: (-scores[i], index._ids[i]))
    return [ScoredHit(index._ids[i], float(scores[i]), SEMANTIC) for i in order[:k]]


def save_vector_index(index: VectorIndex, path) -> None:
    """Snapshot: header (dim, count, fingerprint) + packed little-endian f32."""
    with open(path, "wb") as f:
        f.write(_SNAPSHOT_MAGIC)
        f.write(struct.pack("<B", _SNAPSHOT_VERSION))
        f.write(struct.pack("<II", index.dim, len(index)))
        fp = index.provider_fingerprint.encode("utf-8")
        f.write(struct.pack("<H", len(fp)))
        f.write(fp)
        for i, cid in enumerate(index._ids):
            raw = cid.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(index._matrix[i].astype("<f4").tobytes())


def load_vector_index(path) -> VectorIndex:
    with open(path, "rb") as f:
        if f.read(4) != _SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: not a vector index snapshot")
        (version,) = struct.unpack("<B", f.read(1))
        if version != _SNAPSHOT_VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        dim, count = struct.unpack("<II", f.read(8))
        (fp_len,) = struct.unpack("<H", f.read(2))
        fingerprint = f.read(fp_len).decode("utf-8")
        entries: dict[str, np.ndarray] = {}
        for _ in range(count):
            (id_len,) = struct.unpack("<H", f.read(2))
            cid = f.read(id_len).decode("utf-8")
            vec = np.frombuffer(f.read(4 * dim), dtype="<f4").astype(np.float32)
            entries[cid] = vec
    return VectorIndex(entries, dim, fingerprint)
