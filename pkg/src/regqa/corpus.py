"""Corpus snapshot persistence: documents, chunks, and both indexes on disk.

Snapshot directory layout:

    docs.jsonl      one parsed Document per line
    chunks.jsonl    one Chunk per line
    lex.bin         BM25 index snapshot
    vec.bin         vector index snapshot
    manifest.json   fingerprints, chunk policy, BM25 params
    rules/*.json    optional rule documents served by the rules endpoint

Rebuilds are full, not incremental: at desk-scale corpus sizes a rebuild
is cheap and the invariants stay simple.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .chunker import Chunk, ChunkPolicy, ChunkStore, chunk_document, read_chunks, \
    write_chunks
from .errors import IndexMismatchError
from .ingest import Document
from .lexindex import Bm25Params, LexicalIndex, build_lexical_index, load_lexical_index, \
    save_lexical_index
from .vecindex import EmbeddingProvider, VectorIndex, build_vector_index, \
    load_vector_index, save_vector_index

MANIFEST_NAME = "manifest.json"


@dataclass
class Corpus:
    """One immutable generation of the retrieval corpus."""

    docs: list[Document]
    chunks: list[Chunk]
    store: ChunkStore
    lex: LexicalIndex
    vec: VectorIndex
    policy: ChunkPolicy = field(default_factory=ChunkPolicy)

    @property
    def doc_ids(self) -> list[str]:
        return [d.doc_id for d in self.docs]


def build_corpus(docs: list[Document], provider: EmbeddingProvider,
                 policy: ChunkPolicy | None = None,
                 params: Bm25Params | None = None) -> Corpus:
    """Chunk all documents and build both indexes over the result."""
    policy = policy or ChunkPolicy()
    chunks: list[Chunk] = []
    for doc in docs:
        chunks.extend(chunk_document(doc, policy))
    lex = build_lexical_index(chunks, params or Bm25Params())
    vec = build_vector_index(chunks, provider)
    return Corpus(list(docs), chunks, ChunkStore(chunks), lex, vec, policy)


def _fingerprint(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_corpus(corpus: Corpus, directory) -> dict:
    """Persist a corpus generation; returns the written manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    docs_path = directory / "docs.jsonl"
    with open(docs_path, "w", encoding="utf-8") as f:
        for doc in corpus.docs:
            f.write(json.dumps(doc.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    chunks_path = directory / "chunks.jsonl"
    write_chunks(chunks_path, corpus.chunks)
    save_lexical_index(corpus.lex, directory / "lex.bin")
    save_vector_index(corpus.vec, directory / "vec.bin")
    manifest = {
        "version": 1,
        "doc_ids": corpus.doc_ids,
        "chunk_count": len(corpus.chunks),
        "chunk_policy": corpus.policy.to_dict(),
        "bm25": {"k1": corpus.lex.params.k1, "b": corpus.lex.params.b},
        "embedding_fingerprint": corpus.vec.provider_fingerprint,
        "corpus_fingerprint": _fingerprint(chunks_path),
    }
    with open(directory / MANIFEST_NAME, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def read_manifest(directory) -> dict:
    with open(Path(directory) / MANIFEST_NAME, encoding="utf-8") as f:
        return json.load(f)


def load_corpus(directory, provider: EmbeddingProvider | None = None) -> Corpus:
    """Load a snapshot; verifies the provider fingerprint when one is given."""
    directory = Path(directory)
    manifest = read_manifest(directory)
    docs = []
    with open(directory / "docs.jsonl", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                docs.append(Document.from_dict(json.loads(line)))
    chunks = read_chunks(directory / "chunks.jsonl")
    lex = load_lexical_index(directory / "lex.bin")
    vec = load_vector_index(directory / "vec.bin")
    if provider is not None and provider.fingerprint != vec.provider_fingerprint:
        raise IndexMismatchError(
            f"snapshot embeddings are {vec.provider_fingerprint!r}, "
            f"configured provider is {provider.fingerprint!r}")
    policy = ChunkPolicy.from_dict(manifest["chunk_policy"])
    return Corpus(docs, chunks, ChunkStore(chunks), lex, vec, policy)


def corpus_exists(directory) -> bool:
    return (Path(directory) / MANIFEST_NAME).is_file()
