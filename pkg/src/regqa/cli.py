"""Operator command line for the full pipeline, no service required.

Exit codes: 0 success, 1 usage error, 2 data error (bad input files,
missing corpus, schema violations), 3 upstream failure (embedding, LLM,
or rerank endpoints). Commands are thin adapters over the library.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import corpus as corpus_io
from .chunker import ChunkPolicy
from .errors import RegqaError, UpstreamError, ExtractionFailedError
from .ingest import parse_document
from .lexindex import lexical_search
from .ragqa import LlmClient, QaConfig, answer_question, REFUSED
from .report import format_metrics_table, render_metrics_figure, write_metrics_table
from .retriever import HybridPolicy, RerankClient, RetrievalPipeline, evaluate_retrieval
from .rulecode import PER_MHZ, StationQuery, build_knowledge_graph, emit_ontology, \
    evaluate_limit, extract_rules_llm, fmt_watts, generate_rule_tests, graph_to_dot, \
    parse_ruleset, serialize_ruleset
from .service import load_service_config
from .vecindex import EmbeddingProvider, embed_batch, vector_search


class DataError(click.ClickException):
    exit_code = 2


class UpstreamFailure(click.ClickException):
    exit_code = 3


def _provider(dim: int, endpoint: str | None = None, model: str | None = None) -> EmbeddingProvider:
    if endpoint:
        return EmbeddingProvider(kind="remote", dim=dim, endpoint=endpoint, model_name=model)
    return EmbeddingProvider(kind="hashed", dim=dim)


def _load_corpus(corpus_dir: str, provider: EmbeddingProvider):
    if not corpus_io.corpus_exists(corpus_dir):
        raise DataError(f"no corpus snapshot in {corpus_dir!r} (run 'regqa ingest' first)")
    try:
        return corpus_io.load_corpus(corpus_dir, provider)
    except RegqaError as exc:
        raise DataError(str(exc))


@click.group()
def cli():
    """Grounded QA over regulatory corpora, plus machine-readable spectrum rules."""


@cli.command("ingest")
@click.argument("paths", nargs=-1, required=True, type=click.Path())
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(), help="Corpus snapshot directory.")
@click.option("--max-tokens", default=300, show_default=True)
@click.option("--overlap-tokens", default=50, show_default=True)
@click.option("--min-tokens", default=20, show_default=True)
@click.option("--dim", default=256, show_default=True, help="Embedding dimension.")
@click.option("--embed-endpoint", default=None, help="Remote embeddings endpoint (default: offline hashed embedder).")
@click.option("--embed-model", default=None)
def cmd_ingest(paths, corpus_dir, max_tokens, overlap_tokens, min_tokens, dim,
               embed_endpoint, embed_model):
    """Parse, chunk, index, and snapshot documents.

    Valid files are indexed even when others fail; any failure still
    exits nonzero with a per-file report.
    """
    provider = _provider(dim, embed_endpoint, embed_model)
    policy = ChunkPolicy(max_tokens, overlap_tokens, min_tokens)
    docs = list(corpus_io.load_corpus(corpus_dir, provider).docs) \
        if corpus_io.corpus_exists(corpus_dir) else []
    known = {d.doc_id for d in docs}

    failures: list[str] = []
    added = []
    for path_str in paths:
        path = Path(path_str)
        try:
            raw = path.read_bytes()
            doc = parse_document(raw, path.stem, hint=path.name, source_uri=str(path))
            if doc.doc_id in known:
                raise RegqaError(f"doc_id {doc.doc_id!r} already in corpus")
            docs.append(doc)
            known.add(doc.doc_id)
            added.append(doc)
        except (OSError, RegqaError) as exc:
            failures.append(f"{path}: {exc}")

    if added:
        try:
            corpus = corpus_io.build_corpus(docs, provider, policy)
        except UpstreamError as exc:
            raise UpstreamFailure(str(exc))
        corpus_io.save_corpus(corpus, corpus_dir)
        for doc in added:
            n = len(corpus.store.document_chunks(doc.doc_id))
            click.echo(f"{doc.doc_id}: {n} chunks")
        click.echo(f"corpus: {len(corpus.docs)} documents, {len(corpus.chunks)} chunks")
    if failures:
        for line in failures:
            click.echo(f"FAILED {line}", err=True)
        raise DataError(f"{len(failures)} file(s) failed to ingest")


@cli.command("query")
@click.argument("query")
@click.option("--corpus", "corpus_dir", required=True, type=click.Path())
@click.option("--k", default=8, show_default=True)
@click.option("--lexical-only", is_flag=True, help="BM25 leg only.")
@click.option("--semantic-only", is_flag=True, help="Vector leg only.")
@click.option("--no-rerank", is_flag=True, help="Skip reranking even if an endpoint is set.")
@click.option("--rerank-endpoint", default=None)
@click.option("--filter", "filters", multiple=True, metavar="KEY=VALUE",
              help="Require chunk metadata to match; repeatable.")
@click.option("--dim", default=256, show_default=True)
@click.option("--embed-endpoint", default=None)
@click.option("--embed-model", default=None)
def cmd_query(query, corpus_dir, k, lexical_only, semantic_only, no_rerank,
              rerank_endpoint, filters, dim, embed_endpoint, embed_model):
    """Search the corpus and print ranked hits."""
    if lexical_only and semantic_only:
        raise click.UsageError("--lexical-only and --semantic-only are mutually exclusive")
    where = {}
    for pair in filters:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise click.UsageError(f"--filter needs KEY=VALUE, got {pair!r}")
        where[key] = value
    provider = _provider(dim, embed_endpoint, embed_model)
    corpus = _load_corpus(corpus_dir, provider)
    deep = len(corpus.chunks) if where else k  # filter needs the full ranking
    try:
        if lexical_only:
            hits = lexical_search(corpus.lex, query, deep)
        elif semantic_only:
            qv = embed_batch(provider, [query])[0]
            hits = vector_search(corpus.vec, qv, deep)
        else:
            rc = None if (no_rerank or not rerank_endpoint) else RerankClient(rerank_endpoint)
            policy = HybridPolicy(final_k=k, rerank=rc is not None)
            pipe = RetrievalPipeline(corpus.store, corpus.lex, corpus.vec, provider,
                                     policy, rc)
            hits = pipe.search(query, where or None)
        if where and (lexical_only or semantic_only):
            from .retriever import filter_hits_by_metadata
            hits = filter_hits_by_metadata(corpus.store, hits, where)[:k]
    except UpstreamError as exc:
        raise UpstreamFailure(str(exc))
    if not hits:
        click.echo("no results")
        return
    for rank, hit in enumerate(hits, 1):
        chunk = corpus.store.get(hit.chunk_id)
        path = " > ".join(chunk.heading_path)
        click.echo(f"{rank:2d}. {hit.score:.6f}  {hit.chunk_id}  [{path}]")
        click.echo(f"    {chunk.text[:160]}")


@cli.command("answer")
@click.argument("question")
@click.option("--corpus", "corpus_dir", required=True, type=click.Path())
@click.option("--llm-endpoint", default=None)
@click.option("--llm-model", default="default", show_default=True)
@click.option("--config", "config_path", default=None, type=click.Path(),
              help="Service config JSON; supplies the LLM endpoint when the flag is absent.")
@click.option("--budget-tokens", default=3000, show_default=True)
@click.option("--dim", default=256, show_default=True)
def cmd_answer(question, corpus_dir, llm_endpoint, llm_model, config_path, budget_tokens, dim):
    """Answer a question over the corpus, printing citations."""
    if not llm_endpoint and config_path:
        cfg = load_service_config(config_path)
        llm_endpoint, llm_model = cfg.llm_endpoint, cfg.llm_model
    if not llm_endpoint:
        raise click.UsageError("an LLM endpoint is required (--llm-endpoint or --config)")
    provider = _provider(dim)
    corpus = _load_corpus(corpus_dir, provider)
    pipe = RetrievalPipeline(corpus.store, corpus.lex, corpus.vec, provider)
    llm = LlmClient(endpoint=llm_endpoint, model_name=llm_model)
    try:
        answer = answer_question(llm, pipe, question, QaConfig(budget_tokens=budget_tokens))
    except UpstreamError as exc:
        raise UpstreamFailure(str(exc))
    click.echo(f"status: {answer.status}")
    click.echo(answer.text)
    if answer.status == REFUSED:
        return
    for cit in answer.citations:
        click.echo(f"[S{cit.window_index}] {cit.doc_id} "
                   f"chunks {cit.ordinal_lo}..{cit.ordinal_hi}")


@cli.group("rules")
def cmd_rules():
    """Validate, evaluate, and project machine-readable rule documents."""


def _read_ruleset(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
        return parse_ruleset(text, ruleset_id=Path(path).stem)
    except OSError as exc:
        raise DataError(str(exc))
    except RegqaError as exc:
        raise DataError(str(exc))


@cmd_rules.command("validate")
@click.argument("rule_file", type=click.Path())
def rules_validate(rule_file):
    """Parse and validate a rule document."""
    rules = _read_ruleset(rule_file)
    click.echo(f"OK {rules.ruleset_id}: band {rules.band_name!r}, "
               f"{len(rules.station_classes)} station classes")


@cmd_rules.command("eval")
@click.argument("rule_file", type=click.Path())
@click.option("--station", type=click.Choice(["base", "mobile"]), required=True)
@click.option("--bandwidth-mhz", default=1.0, show_default=True)
@click.option("--haat-m", default=0.0, show_default=True)
@click.option("--urban", is_flag=True)
def rules_eval(rule_file, station, bandwidth_mhz, haat_m, urban):
    """Evaluate the EIRP limit for a station query."""
    rules = _read_ruleset(rule_file)
    try:
        limit = evaluate_limit(rules, StationQuery(station, bandwidth_mhz, haat_m, urban))
    except RegqaError as exc:
        raise DataError(str(exc))
    unit = "W per MHz" if limit.basis == PER_MHZ else "W"
    click.echo(f"{fmt_watts(limit.value_watts)} {unit}")
    for step in limit.applied_rule_path:
        click.echo(f"  via {step}")


@cmd_rules.command("graph")
@click.argument("rule_file", type=click.Path())
@click.option("--format", "fmt", type=click.Choice(["dot", "json"]), default="dot",
              show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path())
def rules_graph(rule_file, fmt, out_path):
    """Emit the knowledge graph as DOT or a node/edge list."""
    graph = build_knowledge_graph(_read_ruleset(rule_file))
    text = graph_to_dot(graph) if fmt == "dot" else \
        json.dumps(graph.to_dict(), indent=2) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text, nl=False)


@cmd_rules.command("ontology")
@click.argument("rule_file", type=click.Path())
def rules_ontology(rule_file):
    """Emit concepts, properties, and constraints for a rule document."""
    click.echo(emit_ontology(_read_ruleset(rule_file)).render(), nl=False)


@cmd_rules.command("gen-tests")
@click.argument("rule_file", type=click.Path())
@click.option("--out", "out_path", default=None, type=click.Path())
def rules_gen_tests(rule_file, out_path):
    """Generate boundary test cases; one JSON record per line."""
    cases = generate_rule_tests(_read_ruleset(rule_file))
    lines = [json.dumps({"query": q.to_dict(), "expected": limit.to_dict()})
             for q, limit in cases]
    text = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
        click.echo(f"wrote {len(cases)} cases to {out_path}")
    else:
        click.echo(text, nl=False)


@cmd_rules.command("extract")
@click.argument("doc_file", type=click.Path())
@click.option("--llm-endpoint", required=True)
@click.option("--llm-model", default="default", show_default=True)
@click.option("--repair-rounds", default=2, show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path())
def rules_extract(doc_file, llm_endpoint, llm_model, repair_rounds, out_path):
    """Extract a rule document from a source document via the LLM."""
    path = Path(doc_file)
    try:
        doc = parse_document(path.read_bytes(), path.stem, hint=path.name)
    except (OSError, RegqaError) as exc:
        raise DataError(str(exc))
    llm = LlmClient(endpoint=llm_endpoint, model_name=llm_model)
    try:
        rules = extract_rules_llm(llm, doc, max_repair_rounds=repair_rounds)
    except ExtractionFailedError as exc:
        raise DataError(str(exc))
    except UpstreamError as exc:
        raise UpstreamFailure(str(exc))
    text = serialize_ruleset(rules) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text, nl=False)


@cli.command("eval")
@click.argument("queryset_file", type=click.Path())
@click.option("--corpus", "corpus_dir", required=True, type=click.Path())
@click.option("--k", default=8, show_default=True)
@click.option("--dim", default=256, show_default=True)
@click.option("--sweep-max-tokens", default=None,
              help="Comma-separated chunk sizes; re-chunks and evaluates each.")
@click.option("--report-dir", default=None, type=click.Path(),
              help="Write metrics.tsv and metrics.png here.")
def cmd_eval(queryset_file, corpus_dir, k, dim, sweep_max_tokens, report_dir):
    """Evaluate retrieval quality over a queryset (JSONL: query, expected_chunk_id)."""
    provider = _provider(dim)
    corpus = _load_corpus(corpus_dir, provider)
    try:
        queryset = []
        with open(queryset_file, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    rec = json.loads(line)
                    queryset.append((rec["query"], rec["expected_chunk_id"]))
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"bad queryset file: {exc}")
    if not queryset:
        raise DataError("queryset is empty")

    configs: list[tuple[str, corpus_io.Corpus]] = []
    if sweep_max_tokens:
        try:
            sizes = [int(s) for s in sweep_max_tokens.split(",") if s.strip()]
        except ValueError:
            raise click.UsageError("--sweep-max-tokens must be comma-separated integers")
        for size in sizes:
            policy = ChunkPolicy(max_tokens=size,
                                 overlap_tokens=min(corpus.policy.overlap_tokens, size - 1),
                                 min_tokens=min(corpus.policy.min_tokens, size))
            configs.append((f"max_tokens={size}",
                            corpus_io.build_corpus(corpus.docs, provider, policy)))
    else:
        configs.append((f"max_tokens={corpus.policy.max_tokens}", corpus))

    results = []
    for label, built in configs:
        pipe = RetrievalPipeline(built.store, built.lex, built.vec, provider,
                                 HybridPolicy(final_k=k))
        try:
            metrics = evaluate_retrieval(pipe, queryset)
        except RegqaError as exc:
            raise DataError(str(exc))
        results.append((label, metrics))

    click.echo(format_metrics_table(results), nl=False)
    if report_dir:
        out = Path(report_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics_table(results, out / "metrics.tsv")
        render_metrics_figure(results, out / "metrics.png")
        click.echo(f"report written to {out / 'metrics.tsv'} and {out / 'metrics.png'}")


@cli.command("serve")
@click.option("--config", "config_path", required=True, type=click.Path())
def cmd_serve(config_path):
    """Run the HTTP service from a config file."""
    import uvicorn
    from .service import create_app
    try:
        cfg = load_service_config(config_path)
    except (OSError, KeyError, json.JSONDecodeError, ValueError) as exc:
        raise DataError(f"bad config: {exc}")
    uvicorn.run(create_app(cfg), host=cfg.host, port=cfg.port)


def main(argv=None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        return 1
    except UpstreamError as exc:
        click.echo(f"Error: {exc}", err=True)
        return 3
    except RegqaError as exc:
        click.echo(f"Error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
