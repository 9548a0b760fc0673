"""Hybrid retrieval: RRF fusion, cross-encoder reranking, expanded context.

Fusion is reciprocal rank fusion, which is scale-free and therefore
indifferent to the incompatible score ranges of BM25 and cosine. Reranking
(when configured) happens after fusion and before context expansion, so
the reranker scores individual chunks, not merged windows. All orderings
break ties on chunk_id to keep outputs reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import requests

from .chunker import Chunk, ChunkStore, strip_leading_tokens
from .errors import IndexMismatchError, RerankUnavailableError, UnknownChunkError
from .lexindex import FUSED, RERANKED, LexicalIndex, ScoredHit, lexical_search, \
    normalize_terms
from .vecindex import EmbeddingProvider, VectorIndex, embed_batch, vector_search

logger = logging.getLogger(__name__)

_CHUNK_SEP = "\n\n"


@dataclass(frozen=True)
class HybridPolicy:
    k_semantic: int = 20
    k_lexical: int = 20
    rrf_k: float = 60.0
    final_k: int = 8
    expansion_m: int = 1
    rerank: bool = False

    def __post_init__(self):
        if min(self.k_semantic, self.k_lexical, self.final_k) < 1:
            raise ValueError("k_semantic, k_lexical and final_k must be >= 1")
        if self.rrf_k <= 0:
            raise ValueError("rrf_k must be > 0")
        if self.expansion_m < 0:
            raise ValueError("expansion_m must be >= 0")

    def to_dict(self) -> dict:
        return {
            "k_semantic": self.k_semantic,
            "k_lexical": self.k_lexical,
            "rrf_k": self.rrf_k,
            "final_k": self.final_k,
            "expansion_m": self.expansion_m,
            "rerank": self.rerank,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HybridPolicy":
        return cls(**d)


@dataclass(frozen=True)
class ContextWindow:
    """A contiguous ordinal range of one document, ready for prompting."""

    doc_id: str
    lo: int
    hi: int
    text: str
    seed_chunk_ids: list[str]
    score: float
    heading_path: list[str]

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"window range [{self.lo}, {self.hi}] inverted")
        if not self.seed_chunk_ids:
            raise ValueError("window must have at least one seed chunk")


@dataclass(frozen=True)
class RetrievalMetrics:
    recall_at_k: float
    mrr: float
    k: int
    query_count: int

    def __post_init__(self):
        if not 0.0 <= self.recall_at_k <= 1.0 or not 0.0 <= self.mrr <= 1.0:
            raise ValueError("recall and MRR must lie in [0, 1]")


class RerankClient:
    """HTTP client for the pairwise scoring protocol.

    POST {endpoint}/rerank with {"query", "passages"}; the response carries
    index-aligned float "scores". Any transport or protocol failure raises
    RerankUnavailableError; falling back to the fused order is the caller's
    job, done loudly.
    """

    def __init__(self, endpoint: str, timeout: float = 10.0, api_key: str | None = None):
        if not endpoint:
            raise ValueError("endpoint must be non-empty")
        self.endpoint = endpoint
        self.timeout = timeout
        self.api_key = api_key

    def score(self, query: str, passages: list[str]) -> list[float]:
        url = self.endpoint.rstrip("/") + "/rerank"
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                url,
                json={"query": query, "passages": passages},
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise RerankUnavailableError(f"rerank endpoint {url}: {exc}") from exc
        if resp.status_code != 200:
            raise RerankUnavailableError(f"rerank endpoint {url}: HTTP {resp.status_code}")
        try:
            scores = [float(s) for s in resp.json()["scores"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise RerankUnavailableError(
                f"rerank endpoint {url}: malformed response ({exc})") from exc
        if len(scores) != len(passages):
            raise RerankUnavailableError(
                f"rerank endpoint {url}: {len(scores)} scores for {len(passages)} passages")
        return scores


def rrf_fuse(ranked_lists: list[list[str]], rrf_k: float = 60.0) -> list[ScoredHit]:
    """Reciprocal rank fusion: score(id) = sum over lists of 1/(rrf_k + rank).

    Ranks are 1-based; output sorted by score descending, ties broken by
    chunk_id ascending.
    """
    scores: dict[str, float] = {}
    for ranked in ranked_lists:
        if len(set(ranked)) != len(ranked):
            raise ValueError("ranked lists must not repeat ids")
        for rank, chunk_id in enumerate(ranked, start=1):
            scores[chunk_id] = scores.get(chunk_id, 0.0) + 1.0 / (rrf_k + rank)
    ordered = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return [ScoredHit(cid, score, FUSED) for cid, score in ordered]


def hybrid_search(lex: LexicalIndex, vec: VectorIndex, provider: EmbeddingProvider,
                  query: str, policy: HybridPolicy | None = None) -> list[ScoredHit]:
    """Fuse top lexical and top semantic hits, truncated to final_k.

    Each leg contributes only positive-relevance candidates: BM25 already
    omits chunks matching no query term, and semantic hits with cosine <= 0
    are dropped here, so a query matching nothing fuses to an empty result
    instead of surfacing similarity noise. Reranking, when enabled, is
    applied by the caller after fusion.
    """
    policy = policy or HybridPolicy()
    if provider.fingerprint != vec.provider_fingerprint:
        raise IndexMismatchError(
            f"provider fingerprint {provider.fingerprint!r} does not match "
            f"index fingerprint {vec.provider_fingerprint!r}")
    if lex.chunk_ids() != vec.chunk_ids():
        raise IndexMismatchError("lexical and vector indexes cover different chunk sets")
    if not normalize_terms(query):
        return []
    query_vec = embed_batch(provider, [query])[0]
    semantic = [h for h in vector_search(vec, query_vec, policy.k_semantic)
                if h.score > 0.0]
    lexical = lexical_search(lex, query, policy.k_lexical)
    fused = rrf_fuse(
        [[h.chunk_id for h in semantic], [h.chunk_id for h in lexical]],
        policy.rrf_k,
    )
    return fused[:policy.final_k]


def rerank(client, query: str, hits: list[ScoredHit],
           texts: dict[str, str]) -> list[ScoredHit]:
    """Reorder hits by cross-encoder score, ties keeping the fused order."""
    if not hits:
        raise ValueError("hits must be non-empty")
    passages = []
    for hit in hits:
        if hit.chunk_id not in texts:
            raise UnknownChunkError(f"no text for chunk {hit.chunk_id!r}")
        passages.append(texts[hit.chunk_id])
    scores = client.score(query, passages)
    order = sorted(range(len(hits)), key=lambda i: -scores[i])  # stable: fused order on ties
    return [ScoredHit(hits[i].chunk_id, scores[i], RERANKED) for i in order]


def window_text(store: ChunkStore, doc_id: str, lo: int, hi: int) -> str:
    """Concatenate chunks lo..hi, stripping each chunk's declared overlap."""
    doc_chunks = store.document_chunks(doc_id)
    parts = []
    for chunk in doc_chunks[lo:hi + 1]:
        if parts and chunk.overlap_token_count:
            parts.append(strip_leading_tokens(chunk.text, chunk.overlap_token_count))
        else:
            parts.append(chunk.text)
    return _CHUNK_SEP.join(p for p in parts if p)


def expand_context(corpus: ChunkStore | list[Chunk], hits: list[ScoredHit],
                   m: int) -> list[ContextWindow]:
    """Expand each hit to its ordinal neighborhood and merge touching windows.

    Windows of the same document whose ranges overlap or are adjacent merge
    into one; the merged score is the max over seeds and seed_chunk_ids is
    their union. Output is ordered by descending score (ties by doc_id and
    range start).
    """
    store = corpus if isinstance(corpus, ChunkStore) else ChunkStore(corpus)
    by_doc: dict[str, list[tuple[int, int, ScoredHit, Chunk]]] = {}
    for hit in hits:
        chunk = store.get(hit.chunk_id)
        doc_chunks = store.document_chunks(chunk.doc_id)
        last = doc_chunks[-1].ordinal
        lo = max(0, chunk.ordinal - m)
        hi = min(last, chunk.ordinal + m)
        by_doc.setdefault(chunk.doc_id, []).append((lo, hi, hit, chunk))

    windows: list[ContextWindow] = []
    for doc_id, ranges in by_doc.items():
        ranges.sort(key=lambda r: (r[0], r[1]))
        merged: list[list] = []  # [lo, hi, [(hit, chunk), ...]]
        for lo, hi, hit, chunk in ranges:
            if merged and lo <= merged[-1][1] + 1:
                merged[-1][1] = max(merged[-1][1], hi)
                merged[-1][2].append((hit, chunk))
            else:
                merged.append([lo, hi, [(hit, chunk)]])
        for lo, hi, seeds in merged:
            best_hit, best_chunk = max(seeds, key=lambda s: (s[0].score, -s[1].ordinal))
            seed_ids = sorted({c.chunk_id for _, c in seeds},
                              key=lambda cid: store.get(cid).ordinal)
            windows.append(ContextWindow(
                doc_id=doc_id,
                lo=lo,
                hi=hi,
                text=window_text(store, doc_id, lo, hi),
                seed_chunk_ids=seed_ids,
                score=best_hit.score,
                heading_path=list(best_chunk.heading_path),
            ))
    windows.sort(key=lambda w: (-w.score, w.doc_id, w.lo))
    return windows


def filter_hits_by_metadata(store: ChunkStore, hits: list[ScoredHit],
                            where: dict[str, str]) -> list[ScoredHit]:
    """Keep hits whose chunk metadata carries every key=value pair in where."""
    kept = []
    for hit in hits:
        metadata = store.get(hit.chunk_id).metadata
        if all(metadata.get(key) == value for key, value in where.items()):
            kept.append(hit)
    return kept


@dataclass
class RetrievalPipeline:
    """Everything needed to answer retrieval queries over one corpus."""

    store: ChunkStore
    lex: LexicalIndex
    vec: VectorIndex
    provider: EmbeddingProvider
    policy: HybridPolicy = field(default_factory=HybridPolicy)
    rerank_client: RerankClient | None = None

    def search(self, query: str, where: dict[str, str] | None = None) -> list[ScoredHit]:
        policy = self.policy
        if where:
            # fuse deep, filter on metadata, then cut back to final_k
            from dataclasses import replace
            policy = replace(policy, final_k=policy.k_semantic + policy.k_lexical)
        hits = hybrid_search(self.lex, self.vec, self.provider, query, policy)
        if where:
            hits = filter_hits_by_metadata(self.store, hits, where)[:self.policy.final_k]
        if hits and self.policy.rerank and self.rerank_client is not None:
            try:
                hits = rerank(self.rerank_client, query, hits, self.store.texts())
            except RerankUnavailableError as exc:
                logger.warning("reranker unavailable, falling back to fused order: %s", exc)
        return hits

    def retrieve_windows(self, query: str,
                         where: dict[str, str] | None = None) -> list[ContextWindow]:
        hits = self.search(query, where)
        if not hits:
            return []
        return expand_context(self.store, hits, self.policy.expansion_m)


def evaluate_retrieval(pipeline: RetrievalPipeline,
                       queryset: list[tuple[str, str]]) -> RetrievalMetrics:
    """recall@final_k and MRR of the pipeline over (query, expected id) pairs."""
    if not queryset:
        raise ValueError("queryset must be non-empty")
    for _, expected in queryset:
        if expected not in pipeline.store:
            raise UnknownChunkError(f"expected chunk {expected!r} not in corpus")
    found = 0
    reciprocal_sum = 0.0
    for query, expected in queryset:
        hits = pipeline.search(query)
        for rank, hit in enumerate(hits, start=1):
            if hit.chunk_id == expected:
                found += 1
                reciprocal_sum += 1.0 / rank
                break
    n = len(queryset)
    return RetrievalMetrics(
        recall_at_k=found / n,
        mrr=reciprocal_sum / n,
        k=pipeline.policy.final_k,
        query_count=n,
    )
