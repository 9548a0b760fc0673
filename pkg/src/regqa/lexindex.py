"""Okapi BM25 inverted index over chunks: the keyword leg of hybrid search.

No stemming and no stopword removal: regulatory vocabulary (band names,
call signs, rule identifiers) is precise, and recall is the semantic
leg's job. IDF uses the +1-inside-log variant so scores stay nonnegative
for very common terms.
"""

from __future__ import annotations

import math
import struct
from collections import Counter
from dataclasses import dataclass, field

from .chunker import Chunk, _TOKEN_RE
from .errors import DuplicateChunkIdError, EmptyCorpusError

LEXICAL = "lexical"
SEMANTIC = "semantic"
FUSED = "fused"
RERANKED = "reranked"

_SOURCES = {LEXICAL, SEMANTIC, FUSED, RERANKED}

_SNAPSHOT_MAGIC = b"RQLX"
_SNAPSHOT_VERSION = 1


def normalize_terms(text: str) -> list[str]:
    """Lowercased alphanumeric runs; no stemming, no stopwords."""
    return [t.lower() for t in _TOKEN_RE.findall(text)]


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError("k1 must be >= 0")
        if not 0 <= self.b <= 1:
            raise ValueError("b must be in [0, 1]")


@dataclass(frozen=True)
class ScoredHit:
    chunk_id: str
    score: float
    source: str

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"score for {self.chunk_id!r} is not finite")
        if self.source not in _SOURCES:
            raise ValueError(f"unknown hit source {self.source!r}")


@dataclass
class LexicalIndex:
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    avg_doc_length: float
    corpus_size: int
    params: Bm25Params = field(default_factory=Bm25Params)

    def chunk_ids(self) -> set[str]:
        return set(self.doc_lengths)


def build_lexical_index(chunks: list[Chunk], params: Bm25Params | None = None) -> LexicalIndex:
    """Count term frequencies and document lengths for every chunk."""
    if not chunks:
        raise EmptyCorpusError("cannot index an empty chunk list")
    params = params or Bm25Params()
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    for chunk in chunks:
        if chunk.chunk_id in doc_lengths:
            raise DuplicateChunkIdError(f"duplicate chunk_id {chunk.chunk_id!r}")
        terms = normalize_terms(chunk.text)
        doc_lengths[chunk.chunk_id] = len(terms)
        for term, tf in Counter(terms).items():
            postings.setdefault(term, []).append((chunk.chunk_id, tf))
    for plist in postings.values():
        plist.sort()
    avg = sum(doc_lengths.values()) / len(doc_lengths)
    return LexicalIndex(postings, doc_lengths, avg, len(doc_lengths), params)


def idf(corpus_size: int, doc_freq: int) -> float:
    """ln(1 + (N - df + 0.5) / (df + 0.5)); nonnegative for any df <= N."""
    return math.log(1.0 + (corpus_size - doc_freq + 0.5) / (doc_freq + 0.5))


def lexical_search(index: LexicalIndex, query: str, k: int) -> list[ScoredHit]:
    """Okapi BM25 over the query terms; chunks matching no term are omitted.

    Results sorted by score descending, ties broken by chunk_id ascending,
    at most k of them. An empty query yields an empty result.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    terms = normalize_terms(query)
    if not terms:
        return []
    k1, b = index.params.k1, index.params.b
    scores: dict[str, float] = {}
    for term in terms:  # repeated query terms contribute once per occurrence
        plist = index.postings.get(term)
        if not plist:
            continue
        term_idf = idf(index.corpus_size, len(plist))
        for chunk_id, tf in plist:
            dl = index.doc_lengths[chunk_id]
            denom = tf + k1 * (1.0 - b + b * dl / index.avg_doc_length)
            scores[chunk_id] = scores.get(chunk_id, 0.0) + term_idf * tf * (k1 + 1.0) / denom
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return [ScoredHit(cid, score, LEXICAL) for cid, score in ranked[:k]]


# --- snapshot persistence ---------------------------------------------------

def _write_str(f, s: str):
    raw = s.encode("utf-8")
    f.write(struct.pack("<H", len(raw)))
    f.write(raw)


def _read_str(f) -> str:
    (n,) = struct.unpack("<H", f.read(2))
    return f.read(n).decode("utf-8")


def save_lexical_index(index: LexicalIndex, path) -> None:
    """Versioned binary snapshot: header, params, lengths, postings."""
    ids = sorted(index.doc_lengths)
    id_slot = {cid: i for i, cid in enumerate(ids)}
    with open(path, "wb") as f:
        f.write(_SNAPSHOT_MAGIC)
        f.write(struct.pack("<B", _SNAPSHOT_VERSION))
        f.write(struct.pack("<dd", index.params.k1, index.params.b))
        f.write(struct.pack("<I", len(ids)))
        for cid in ids:
            _write_str(f, cid)
            f.write(struct.pack("<I", index.doc_lengths[cid]))
        f.write(struct.pack("<I", len(index.postings)))
        for term in sorted(index.postings):
            _write_str(f, term)
            plist = index.postings[term]
            f.write(struct.pack("<I", len(plist)))
            for cid, tf in plist:
                f.write(struct.pack("<II", id_slot[cid], tf))


def load_lexical_index(path) -> LexicalIndex:
    with open(path, "rb") as f:
        if f.read(4) != _SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: not a lexical index snapshot")
        (version,) = struct.unpack("<B", f.read(1))
        if version != _SNAPSHOT_VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        k1, b = struct.unpack("<dd", f.read(16))
        (n_ids,) = struct.unpack("<I", f.read(4))
        ids: list[str] = []
        doc_lengths: dict[str, int] = {}
        for _ in range(n_ids):
            cid = _read_str(f)
            (length,) = struct.unpack("<I", f.read(4))
            ids.append(cid)
            doc_lengths[cid] = length
        (n_terms,) = struct.unpack("<I", f.read(4))
        postings: dict[str, list[tuple[str, int]]] = {}
        for _ in range(n_terms):
            term = _read_str(f)
            (n_posts,) = struct.unpack("<I", f.read(4))
            plist = []
            for _ in range(n_posts):
                slot, tf = struct.unpack("<II", f.read(8))
                plist.append((ids[slot], tf))
            postings[term] = plist
    avg = sum(doc_lengths.values()) / len(doc_lengths) if doc_lengths else 0.0
    return LexicalIndex(postings, doc_lengths, avg, len(doc_lengths), Bm25Params(k1, b))
