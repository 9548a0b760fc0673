"""Grounded retrieval QA over regulatory corpora, plus rules as code."""

from .chunker import Chunk, ChunkPolicy, ChunkStore, chunk_document, count_tokens, neighbors
from .ingest import Block, Document, detect_format, parse_html, parse_marked_text
from .lexindex import Bm25Params, LexicalIndex, ScoredHit, build_lexical_index, \
    lexical_search, normalize_terms
from .ragqa import Answer, Citation, LlmClient, PromptTemplate, QaConfig, REFUSAL_TEXT, \
    answer_question, assemble_prompt, attribute_citations
from .retriever import ContextWindow, HybridPolicy, RerankClient, RetrievalMetrics, \
    RetrievalPipeline, evaluate_retrieval, expand_context, hybrid_search, rerank, rrf_fuse
from .rulecode import Ontology, PowerLimit, RuleGraph, RuleSet, StationClass, \
    StationQuery, Tier, build_knowledge_graph, emit_ontology, evaluate_limit, \
    extract_rules_llm, generate_rule_tests, graph_to_dot, parse_ruleset, serialize_ruleset
from .vecindex import EmbeddingProvider, VectorIndex, build_vector_index, embed_batch, \
    hash_embed, vector_search

__version__ = "0.1.0"
