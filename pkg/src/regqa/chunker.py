"""Token-budgeted chunking that never splits tables.

The token proxy is the count of maximal alphanumeric runs: deterministic,
model-agnostic, and close enough to subword counts for budget purposes.
Blocks are packed greedily in document order; a paragraph larger than the
budget is split at sentence boundaries, a table larger than the budget is
emitted whole and flagged atomic_oversize. Consecutive chunks share a
configurable token overlap drawn from trailing paragraph text, and each
chunk records how many of its leading tokens are that overlap so the
original text can be reconstructed.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import EmptyDocumentError, UnknownChunkError
from .ingest import Document, LIST_ITEM, PARAGRAPH, TABLE

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")

_BLOCK_SEP = "\n\n"


def count_tokens(text: str) -> int:
    """Number of maximal alphanumeric runs in text."""
    return len(_TOKEN_RE.findall(text))


def token_spans(text: str) -> list[tuple[int, int]]:
    return [m.span() for m in _TOKEN_RE.finditer(text)]


def trailing_token_text(text: str, n: int) -> str:
    """Substring of text starting at its n-th token from the end."""
    if n <= 0:
        return ""
    spans = token_spans(text)
    if not spans:
        return ""
    if n >= len(spans):
        return text
    return text[spans[len(spans) - n][0]:]


def strip_leading_tokens(text: str, n: int) -> str:
    """Drop the first n tokens of text (plus any separator that follows)."""
    if n <= 0:
        return text
    spans = token_spans(text)
    if n >= len(spans):
        return ""
    return text[spans[n - 1][1]:].lstrip()


@dataclass(frozen=True)
class ChunkPolicy:
    max_tokens: int = 300
    overlap_tokens: int = 50
    min_tokens: int = 20

    def __post_init__(self):
        if not 0 <= self.overlap_tokens < self.max_tokens:
            raise ValueError("overlap_tokens must satisfy 0 <= overlap < max_tokens")
        if not 0 < self.min_tokens <= self.max_tokens:
            raise ValueError("min_tokens must satisfy 0 < min_tokens <= max_tokens")

    def to_dict(self) -> dict:
        return {
            "max_tokens": self.max_tokens,
            "overlap_tokens": self.overlap_tokens,
            "min_tokens": self.min_tokens,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChunkPolicy":
        return cls(**d)


@dataclass(frozen=True)
class Chunk:
    """Retrieval unit: a token-budgeted slice of one document."""

    chunk_id: str
    doc_id: str
    ordinal: int
    text: str
    token_count: int
    heading_path: list[str] = field(default_factory=list)
    atomic_oversize: bool = False
    metadata: dict[str, str] = field(default_factory=dict)
    overlap_token_count: int = 0  # leading tokens repeated from the previous chunk

    def to_dict(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "doc_id": self.doc_id,
            "ordinal": self.ordinal,
            "text": self.text,
            "token_count": self.token_count,
            "heading_path": list(self.heading_path),
            "atomic_oversize": self.atomic_oversize,
            "metadata": dict(self.metadata),
            "overlap_token_count": self.overlap_token_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Chunk":
        return cls(
            chunk_id=d["chunk_id"],
            doc_id=d["doc_id"],
            ordinal=d["ordinal"],
            text=d["text"],
            token_count=d["token_count"],
            heading_path=list(d.get("heading_path", [])),
            atomic_oversize=d.get("atomic_oversize", False),
            metadata=dict(d.get("metadata", {})),
            overlap_token_count=d.get("overlap_token_count", 0),
        )


@dataclass
class _Unit:
    text: str
    tokens: int
    kind: str
    heading_path: list[str]
    oversize_table: bool = False

    @property
    def paragraphish(self) -> bool:
        # list items are treated like paragraphs; only tables are atomic
        return self.kind in (PARAGRAPH, LIST_ITEM)


def _split_sentences(text: str) -> list[str]:
    return [s for s in _SENTENCE_SPLIT_RE.split(text) if s]


def _split_by_tokens(text: str, max_tokens: int) -> list[str]:
    """Split at word boundaries into pieces of at most max_tokens tokens."""
    spans = token_spans(text)
    if len(spans) <= max_tokens:
        return [text]
    pieces = []
    start = 0
    for i in range(max_tokens, len(spans), max_tokens):
        pieces.append(text[start:spans[i][0]].rstrip())
        start = spans[i][0]
    pieces.append(text[start:])
    return [p for p in pieces if p]


def _split_oversize_paragraph(text: str, policy: ChunkPolicy) -> list[str]:
    """Split an oversize paragraph at sentence boundaries, never mid-word.

    Sentences are packed into pieces of at most max_tokens; a single
    sentence above the budget falls back to word-boundary splitting. A
    trailing fragment below min_tokens is merged back when it fits.
    """
    parts: list[str] = []
    for sentence in _split_sentences(text):
        if count_tokens(sentence) > policy.max_tokens:
            parts.extend(_split_by_tokens(sentence, policy.max_tokens))
        else:
            parts.append(sentence)

    pieces: list[str] = []
    cur: list[str] = []
    cur_tokens = 0
    for part in parts:
        t = count_tokens(part)
        if cur and cur_tokens + t > policy.max_tokens:
            pieces.append(" ".join(cur))
            cur, cur_tokens = [], 0
        cur.append(part)
        cur_tokens += t
    if cur:
        tail = " ".join(cur)
        if pieces and cur_tokens < policy.min_tokens and \
                count_tokens(pieces[-1]) + cur_tokens <= policy.max_tokens:
            pieces[-1] = pieces[-1] + " " + tail
        else:
            pieces.append(tail)
    return pieces


def _units_for(doc: Document, policy: ChunkPolicy) -> list[_Unit]:
    units: list[_Unit] = []
    for block in doc.blocks:
        tokens = count_tokens(block.text)
        if block.kind == TABLE:
            units.append(_Unit(block.text, tokens, TABLE, block.heading_path,
                               oversize_table=tokens > policy.max_tokens))
        elif tokens > policy.max_tokens:
            for piece in _split_oversize_paragraph(block.text, policy):
                units.append(_Unit(piece, count_tokens(piece), block.kind, block.heading_path))
        else:
            units.append(_Unit(block.text, tokens, block.kind, block.heading_path))
    return units


def chunk_document(doc: Document, policy: ChunkPolicy | None = None) -> list[Chunk]:
    """Pack document blocks into chunks of at most policy.max_tokens tokens.

    Tables are never split: one larger than the budget becomes its own
    chunk with atomic_oversize=True. Each chunk's heading_path is that of
    its first block, and consecutive chunks share overlap_tokens of
    trailing/leading paragraph text (recorded in overlap_token_count).
    """
    policy = policy or ChunkPolicy()
    if not doc.blocks:
        raise EmptyDocumentError(f"document {doc.doc_id!r} has no blocks")

    chunks: list[Chunk] = []
    cur_units: list[_Unit] = []
    cur_prefix = ""  # overlap text carried from the previous chunk
    cur_tokens = 0
    pending_overlap = ""

    def emit(units: list[_Unit], prefix: str, atomic: bool):
        parts = ([prefix] if prefix else []) + [u.text for u in units]
        text = _BLOCK_SEP.join(parts)
        ordinal = len(chunks)
        chunks.append(Chunk(
            chunk_id=f"{doc.doc_id}#{ordinal}",
            doc_id=doc.doc_id,
            ordinal=ordinal,
            text=text,
            token_count=count_tokens(text),
            heading_path=list(units[0].heading_path),
            atomic_oversize=atomic,
            metadata=dict(doc.metadata),
            overlap_token_count=count_tokens(prefix),
        ))

    def trailing_overlap(units: list[_Unit], prefix: str) -> str:
        """Overlap for the next chunk: last tokens of the trailing paragraph run."""
        if policy.overlap_tokens <= 0:
            return ""
        run: list[str] = []
        for u in reversed(units):
            if not u.paragraphish:
                break
            run.insert(0, u.text)
        else:
            if prefix:  # every unit was paragraphish; the prefix is paragraph text too
                run.insert(0, prefix)
        if not run:
            return ""
        return trailing_token_text(_BLOCK_SEP.join(run), policy.overlap_tokens)

    def flush():
        nonlocal cur_units, cur_prefix, cur_tokens, pending_overlap
        if not cur_units:
            return
        pending_overlap = trailing_overlap(cur_units, cur_prefix)
        emit(cur_units, cur_prefix, atomic=False)
        cur_units, cur_prefix, cur_tokens = [], "", 0

    for unit in _units_for(doc, policy):
        if unit.oversize_table:
            flush()
            emit([unit], "", atomic=True)
            pending_overlap = ""  # a table chunk contributes no paragraph overlap
            continue
        if cur_units and cur_tokens + unit.tokens > policy.max_tokens:
            flush()
        if not cur_units and pending_overlap:
            take = min(policy.overlap_tokens, policy.max_tokens - unit.tokens)
            overlap = trailing_token_text(pending_overlap, take) if take > 0 else ""
            if overlap:
                cur_prefix = overlap
                cur_tokens += count_tokens(overlap)
            pending_overlap = ""
        cur_units.append(unit)
        cur_tokens += unit.tokens
    flush()
    return chunks


class ChunkStore:
    """Immutable lookup over a chunk corpus: by id and by document order."""

    def __init__(self, chunks: list[Chunk]):
        self._by_id: dict[str, Chunk] = {}
        self._by_doc: dict[str, list[Chunk]] = {}
        for chunk in chunks:
            self._by_id[chunk.chunk_id] = chunk
            self._by_doc.setdefault(chunk.doc_id, []).append(chunk)
        for doc_chunks in self._by_doc.values():
            doc_chunks.sort(key=lambda c: c.ordinal)

    def __len__(self) -> int:
        return len(self._by_id)

    def __contains__(self, chunk_id: str) -> bool:
        return chunk_id in self._by_id

    def ids(self) -> list[str]:
        return sorted(self._by_id)

    def get(self, chunk_id: str) -> Chunk:
        try:
            return self._by_id[chunk_id]
        except KeyError:
            raise UnknownChunkError(f"unknown chunk_id {chunk_id!r}") from None

    def document_chunks(self, doc_id: str) -> list[Chunk]:
        return list(self._by_doc.get(doc_id, []))

    def all_chunks(self) -> list[Chunk]:
        return [c for doc_id in sorted(self._by_doc) for c in self._by_doc[doc_id]]

    def texts(self) -> dict[str, str]:
        return {cid: c.text for cid, c in self._by_id.items()}


def neighbors(corpus: list[Chunk] | ChunkStore, chunk_id: str, m: int) -> list[Chunk]:
    """Chunks of the same document with ordinal within m of chunk_id's, in order."""
    store = corpus if isinstance(corpus, ChunkStore) else ChunkStore(corpus)
    center = store.get(chunk_id)
    return [c for c in store.document_chunks(center.doc_id)
            if abs(c.ordinal - center.ordinal) <= m]


def write_chunks(path, chunks: list[Chunk]) -> None:
    """Write chunks as one JSON record per line."""
    with open(path, "w", encoding="utf-8") as f:
        for chunk in chunks:
            f.write(json.dumps(chunk.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def read_chunks(path) -> list[Chunk]:
    chunks = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                chunks.append(Chunk.from_dict(json.loads(line)))
    return chunks
