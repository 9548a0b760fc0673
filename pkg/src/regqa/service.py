"""HTTP facade binding the retrieval pipeline into an operable system.

Queries and answers run against an immutable corpus generation; ingest
rebuilds the whole corpus under a single-writer lock and swaps the
generation atomically, so in-flight queries finish on the old one.
Feedback lands in an append-only JSONL log for expert review.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import corpus as corpus_io
from .chunker import ChunkPolicy
from .errors import LlmProtocolError, LlmUnreachableError, NoContentError, RegqaError, \
    HaatOutOfDomainError, NoMatchingClassError
from .ingest import parse_html, parse_marked_text, detect_format
from .lexindex import Bm25Params
from .ragqa import LlmClient, QaConfig, answer_with_context, refusal_answer
from .retriever import HybridPolicy, RerankClient, RetrievalPipeline
from .rulecode import RuleSet, StationQuery, evaluate_limit, parse_ruleset
from .vecindex import EmbeddingProvider

RATINGS = ("correct", "incorrect", "unsure")


@dataclass
class ServiceConfig:
    corpus_dir: str
    host: str = "127.0.0.1"
    port: int = 8807
    embedding: EmbeddingProvider = field(
        default_factory=lambda: EmbeddingProvider(kind="hashed", dim=256))
    llm_endpoint: str | None = None
    llm_model: str = "default"
    llm_temperature: float = 0.0
    llm_max_output_tokens: int = 1024
    llm_api_key: str | None = None
    rerank_endpoint: str | None = None
    rerank_api_key: str | None = None
    policy: HybridPolicy = field(default_factory=HybridPolicy)
    chunk_policy: ChunkPolicy = field(default_factory=ChunkPolicy)
    bm25: Bm25Params = field(default_factory=Bm25Params)
    prompt_budget_tokens: int = 3000
    ui_dir: str | None = None


def _apply_env(cfg: ServiceConfig) -> ServiceConfig:
    env = os.environ
    if env.get("REGQA_LLM_ENDPOINT"):
        cfg.llm_endpoint = env["REGQA_LLM_ENDPOINT"]
    if env.get("REGQA_LLM_API_KEY"):
        cfg.llm_api_key = env["REGQA_LLM_API_KEY"]
    if env.get("REGQA_RERANK_ENDPOINT"):
        cfg.rerank_endpoint = env["REGQA_RERANK_ENDPOINT"]
    if env.get("REGQA_RERANK_API_KEY"):
        cfg.rerank_api_key = env["REGQA_RERANK_API_KEY"]
    if env.get("REGQA_EMBED_ENDPOINT"):
        emb = cfg.embedding
        cfg.embedding = EmbeddingProvider(
            kind="remote", dim=emb.dim, endpoint=env["REGQA_EMBED_ENDPOINT"],
            model_name=emb.model_name, api_key=env.get("REGQA_EMBED_API_KEY", emb.api_key))
    return cfg


def load_service_config(path) -> ServiceConfig:
    """Read a JSON config file; environment variables override endpoints/keys."""
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    emb_raw = raw.get("embedding", {"kind": "hashed", "dim": 256})
    embedding = EmbeddingProvider(
        kind=emb_raw.get("kind", "hashed"),
        dim=emb_raw.get("dim", 256),
        endpoint=emb_raw.get("endpoint"),
        model_name=emb_raw.get("model_name"),
        api_key=emb_raw.get("api_key"),
    )
    llm_raw = raw.get("llm", {})
    cfg = ServiceConfig(
        corpus_dir=raw["corpus_dir"],
        host=raw.get("host", "127.0.0.1"),
        port=raw.get("port", 8807),
        embedding=embedding,
        llm_endpoint=llm_raw.get("endpoint"),
        llm_model=llm_raw.get("model_name", "default"),
        llm_temperature=llm_raw.get("temperature", 0.0),
        llm_max_output_tokens=llm_raw.get("max_output_tokens", 1024),
        llm_api_key=llm_raw.get("api_key"),
        rerank_endpoint=raw.get("rerank", {}).get("endpoint"),
        rerank_api_key=raw.get("rerank", {}).get("api_key"),
        policy=HybridPolicy.from_dict(raw["policy"]) if "policy" in raw else HybridPolicy(),
        chunk_policy=ChunkPolicy.from_dict(raw["chunk_policy"])
        if "chunk_policy" in raw else ChunkPolicy(),
        bm25=Bm25Params(**raw["bm25"]) if "bm25" in raw else Bm25Params(),
        prompt_budget_tokens=raw.get("prompt_budget_tokens", 3000),
        ui_dir=raw.get("ui_dir"),
    )
    return _apply_env(cfg)


class FeedbackLog:
    """Append-only JSONL feedback log with monotone timestamps."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._count = 0
        self._last_ts = 0.0
        if self.path.exists():
            for entry in self.entries():
                self._count += 1
                self._last_ts = max(self._last_ts, entry.get("timestamp", 0.0))

    def append(self, question: str, answer_text: str, rating: str, note: str) -> str:
        with self._lock:
            self._count += 1
            entry_id = f"fb-{self._count:06d}"
            ts = max(time.time(), self._last_ts)
            self._last_ts = ts
            record = {
                "entry_id": entry_id,
                "question": question,
                "answer_text": answer_text,
                "rating": rating,
                "note": note,
                "timestamp": ts,
            }
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(record, ensure_ascii=False) + "\n")
        return entry_id

    def entries(self) -> list[dict]:
        if not self.path.exists():
            return []
        with open(self.path, encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]


def _load_rulesets(rules_dir: Path) -> dict[str, RuleSet]:
    rulesets: dict[str, RuleSet] = {}
    if rules_dir.is_dir():
        for path in sorted(rules_dir.glob("*.json")):
            rules = parse_ruleset(path.read_text(encoding="utf-8"), ruleset_id=path.stem,
                                  source_doc=str(path.name))
            rulesets[rules.ruleset_id] = rules
    return rulesets


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def _snippet(text: str, limit: int = 240) -> str:
    return text if len(text) <= limit else text[:limit].rstrip() + "…"


def create_app(config: ServiceConfig, *, llm_client=None, rerank_client=None) -> FastAPI:
    """Build the service; pre-built clients may be injected for testing."""
    app = FastAPI(title="regqa")
    corpus_dir = Path(config.corpus_dir)
    corpus_dir.mkdir(parents=True, exist_ok=True)

    if llm_client is None and config.llm_endpoint:
        llm_client = LlmClient(
            endpoint=config.llm_endpoint,
            model_name=config.llm_model,
            temperature=config.llm_temperature,
            max_output_tokens=config.llm_max_output_tokens,
            api_key=config.llm_api_key,
        )
    if rerank_client is None and config.rerank_endpoint:
        rerank_client = RerankClient(config.rerank_endpoint, api_key=config.rerank_api_key)

    state: dict = {
        "corpus": corpus_io.load_corpus(corpus_dir, config.embedding)
        if corpus_io.corpus_exists(corpus_dir) else None,
    }
    ingest_lock = threading.Lock()
    feedback = FeedbackLog(corpus_dir / "feedback.jsonl")
    rulesets = _load_rulesets(corpus_dir / "rules")
    qa_cfg = QaConfig(budget_tokens=config.prompt_budget_tokens)

    def pipeline() -> RetrievalPipeline | None:
        corpus = state["corpus"]
        if corpus is None:
            return None
        return RetrievalPipeline(
            store=corpus.store,
            lex=corpus.lex,
            vec=corpus.vec,
            provider=config.embedding,
            policy=config.policy,
            rerank_client=rerank_client,
        )

    @app.get("/health")
    def health():
        corpus = state["corpus"]
        try:
            version = metadata.version("regqa")
        except metadata.PackageNotFoundError:
            version = "unknown"
        manifest = corpus_io.read_manifest(corpus_dir) if corpus_io.corpus_exists(corpus_dir) else {}
        return {
            "status": "ok",
            "version": version,
            "doc_count": len(corpus.docs) if corpus else 0,
            "chunk_count": len(corpus.chunks) if corpus else 0,
            "embedding_fingerprint": config.embedding.fingerprint,
            "corpus_fingerprint": manifest.get("corpus_fingerprint", ""),
            "rulesets": sorted(rulesets),
        }

    @app.post("/ingest")
    async def ingest_doc(request: Request):
        body = await request.json()
        doc_id = (body.get("doc_id") or "").strip()
        content = body.get("content") or ""
        if not doc_id or not content.strip():
            return _error(400, "doc_id and content are required")
        metadata_map = dict(body.get("metadata") or {})
        if body.get("title"):
            metadata_map.setdefault("title", body["title"])
        fmt = body.get("format")
        try:
            if fmt is None:
                fmt = detect_format(content.encode("utf-8"))
            if fmt == "html":
                doc = parse_html(content, doc_id, metadata_map)
            elif fmt == "marked_text":
                doc = parse_marked_text(content, doc_id, metadata_map)
            else:
                return _error(400, f"unknown format {fmt!r}")
        except (NoContentError, RegqaError) as exc:
            return _error(400, str(exc))

        with ingest_lock:
            old = state["corpus"]
            docs = list(old.docs) if old else []
            if any(d.doc_id == doc_id for d in docs):
                return _error(409, f"doc_id {doc_id!r} already ingested")
            docs.append(doc)
            new_corpus = corpus_io.build_corpus(
                docs, config.embedding, config.chunk_policy, config.bm25)
            corpus_io.save_corpus(new_corpus, corpus_dir)
            state["corpus"] = new_corpus
        chunk_count = len(new_corpus.store.document_chunks(doc_id))
        return {"doc_id": doc_id, "chunk_count": chunk_count}

    @app.post("/query")
    async def query(request: Request):
        body = await request.json()
        text = (body.get("query") or "").strip()
        if not text:
            return _error(400, "query must be non-empty")
        k = body.get("k", config.policy.final_k)
        if not isinstance(k, int) or k < 1:
            return _error(400, "k must be a positive integer")
        where = body.get("filter")
        if where is not None and (not isinstance(where, dict)
                                  or not all(isinstance(v, str) for v in where.values())):
            return _error(400, "filter must map metadata keys to string values")
        pipe = pipeline()
        if pipe is None:
            return {"hits": []}
        hits = pipe.search(text, where)[:k]
        out = []
        for hit in hits:
            chunk = pipe.store.get(hit.chunk_id)
            out.append({
                "chunk_id": chunk.chunk_id,
                "doc_id": chunk.doc_id,
                "ordinal": chunk.ordinal,
                "heading_path": list(chunk.heading_path),
                "score": hit.score,
                "source": hit.source,
                "snippet": _snippet(chunk.text),
            })
        return {"hits": out}

    @app.post("/answer")
    async def answer(request: Request):
        body = await request.json()
        question = (body.get("question") or "").strip()
        if not question:
            return _error(400, "question must be non-empty")
        if llm_client is None:
            return _error(503, "no LLM endpoint configured")
        pipe = pipeline()
        try:
            if pipe is None:
                result, windows = refusal_answer(llm_client), []
            else:
                result, windows = answer_with_context(llm_client, pipe, question, qa_cfg)
        except LlmUnreachableError as exc:
            return _error(502, str(exc))
        except LlmProtocolError as exc:
            return _error(502, str(exc))
        citations = []
        for cit in result.citations:
            window = windows[cit.window_index]
            citations.append({
                "window_index": cit.window_index,
                "doc_id": cit.doc_id,
                "ordinal_range": [cit.ordinal_lo, cit.ordinal_hi],
                "heading_path": list(window.heading_path),
                "text": window.text,
            })
        return {
            "status": result.status,
            "text": result.text,
            "model_name": result.model_name,
            "prompt_token_estimate": result.prompt_token_estimate,
            "citations": citations,
        }

    @app.post("/rules/evaluate")
    async def rules_evaluate(request: Request):
        body = await request.json()
        ruleset_id = body.get("ruleset_id") or ""
        rules = rulesets.get(ruleset_id)
        if rules is None:
            return _error(404, f"unknown ruleset {ruleset_id!r}")
        try:
            q = StationQuery(
                station=body.get("station", ""),
                occupied_bandwidth_mhz=float(body.get("occupied_bandwidth_mhz", 0)),
                haat_m=float(body.get("haat_m", 0)),
                urban=bool(body.get("urban", False)),
            )
        except (TypeError, ValueError) as exc:
            return _error(400, f"invalid station query: {exc}")
        try:
            limit = evaluate_limit(rules, q)
        except HaatOutOfDomainError as exc:
            return _error(422, str(exc))
        except NoMatchingClassError as exc:
            return _error(422, str(exc))
        return limit.to_dict()

    @app.post("/feedback")
    async def post_feedback(request: Request):
        body = await request.json()
        rating = body.get("rating")
        if rating not in RATINGS:
            return _error(400, f"rating is required and must be one of {list(RATINGS)}")
        entry_id = feedback.append(
            question=body.get("question", ""),
            answer_text=body.get("answer_text", ""),
            rating=rating,
            note=body.get("note", ""),
        )
        return {"entry_id": entry_id}

    if config.ui_dir and Path(config.ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=config.ui_dir, html=True), name="ui")

    return app
