import json
from pathlib import Path

import pytest

from regqa.cli import main
from wire_stubs import WireStub, chat_route

DOC_A = """# Licensing

Licence applications require the operator callsign and site coordinates.

Renewal windows open ninety days before expiry of the licence term.
"""

DOC_B = """# Power

Mobile handsets carry a qflat transmit ceiling of two watts zq77 marker.
"""


def write_docs(tmp_path) -> tuple[Path, Path]:
    a = tmp_path / "licensing.txt"
    b = tmp_path / "power.txt"
    a.write_text(DOC_A, encoding="utf-8")
    b.write_text(DOC_B, encoding="utf-8")
    return a, b


def ingest(tmp_path, capsys) -> str:
    a, b = write_docs(tmp_path)
    corpus = str(tmp_path / "corpus")
    assert main(["ingest", str(a), str(b), "--corpus", corpus]) == 0
    capsys.readouterr()
    return corpus


class TestIngestCommand:
    def test_two_valid_files(self, tmp_path, capsys):
        a, b = write_docs(tmp_path)
        code = main(["ingest", str(a), str(b), "--corpus", str(tmp_path / "c")])
        out = capsys.readouterr().out
        assert code == 0
        assert "licensing:" in out and "power:" in out
        assert "2 documents" in out

    def test_partial_failure_still_indexes_valid(self, tmp_path, capsys):
        a, _ = write_docs(tmp_path)
        empty = tmp_path / "empty.txt"
        empty.write_text("", encoding="utf-8")
        code = main(["ingest", str(a), str(empty), "--corpus", str(tmp_path / "c")])
        captured = capsys.readouterr()
        assert code == 2
        assert "licensing:" in captured.out
        assert "empty.txt" in captured.err
        # the valid document is queryable
        assert main(["query", "licence callsign", "--corpus", str(tmp_path / "c")]) == 0

    def test_missing_path_nonzero(self, tmp_path, capsys):
        code = main(["ingest", str(tmp_path / "ghost.txt"), "--corpus", str(tmp_path / "c")])
        assert code == 2


class TestQueryCommand:
    def test_lexical_only_absent_term(self, tmp_path, capsys):
        corpus = ingest(tmp_path, capsys)
        code = main(["query", "unseenterm9z", "--corpus", corpus, "--lexical-only"])
        out = capsys.readouterr().out
        assert code == 0
        assert "no results" in out

    def test_default_hybrid_finds_needle(self, tmp_path, capsys):
        corpus = ingest(tmp_path, capsys)
        code = main(["query", "zq77 marker transmit", "--corpus", corpus])
        out = capsys.readouterr().out
        assert code == 0
        assert out.splitlines()[0].startswith(" 1.")
        assert "power#" in out.splitlines()[0]

    def test_semantic_only_runs(self, tmp_path, capsys):
        corpus = ingest(tmp_path, capsys)
        code = main(["query", "licence callsign", "--corpus", corpus, "--semantic-only"])
        assert code == 0
        assert "licensing#" in capsys.readouterr().out

    def test_missing_corpus_nonzero(self, tmp_path, capsys):
        code = main(["query", "anything", "--corpus", str(tmp_path / "nope")])
        assert code == 2

    def test_conflicting_leg_flags_usage_error(self, tmp_path, capsys):
        corpus = ingest(tmp_path, capsys)
        code = main(["query", "x", "--corpus", corpus,
                     "--lexical-only", "--semantic-only"])
        assert code == 1

    def test_metadata_filter_flag(self, tmp_path, capsys):
        corpus = ingest(tmp_path, capsys)
        # both docs share no metadata beyond the default empty subject
        code = main(["query", "licence callsign", "--corpus", corpus,
                     "--filter", "subject=power"])
        out = capsys.readouterr().out
        assert code == 0
        assert "no results" in out

    def test_malformed_filter_usage_error(self, tmp_path, capsys):
        corpus = ingest(tmp_path, capsys)
        assert main(["query", "x", "--corpus", corpus, "--filter", "nokey"]) == 1


class TestAnswerCommand:
    def test_refusal_sentinel_printed(self, tmp_path, capsys):
        corpus = ingest(tmp_path, capsys)
        # query words hash into buckets untouched by the corpus: zero overlap
        with WireStub({"/chat/completions": chat_route(lambda u: "never")}) as stub:
            code = main(["answer", "nx2q nx3q nx4q", "--corpus", corpus,
                         "--llm-endpoint", stub.url])
            out = capsys.readouterr().out
            assert code == 0
            assert "status: refused" in out
            assert stub.requests == []  # refusal happens before any call

    def test_echo_backend_prints_citations(self, tmp_path, capsys):
        corpus = ingest(tmp_path, capsys)
        with WireStub({"/chat/completions": chat_route(lambda u: u)}) as stub:
            code = main(["answer", "zq77 marker transmit ceiling", "--corpus", corpus,
                         "--llm-endpoint", stub.url])
        out = capsys.readouterr().out
        assert code == 0
        assert "status: answered" in out
        assert "[S0] power" in out

    def test_missing_endpoint_usage_error(self, tmp_path, capsys):
        corpus = ingest(tmp_path, capsys)
        code = main(["answer", "anything", "--corpus", corpus])
        assert code == 1

    def test_dead_endpoint_exit_three(self, tmp_path, capsys):
        corpus = ingest(tmp_path, capsys)
        code = main(["answer", "zq77 marker", "--corpus", corpus,
                     "--llm-endpoint", "http://127.0.0.1:9"])
        assert code == 3


@pytest.fixture
def pcs_file(tmp_path, pcs_text) -> str:
    path = tmp_path / "pcs.json"
    path.write_text(pcs_text, encoding="utf-8")
    return str(path)


class TestRulesCommands:
    def test_eval_mobile_prints_two_watts(self, pcs_file, capsys):
        code = main(["rules", "eval", pcs_file, "--station", "mobile"])
        out = capsys.readouterr().out
        assert code == 0
        assert out.splitlines()[0] == "2 W"

    def test_eval_wide_prints_per_mhz(self, pcs_file, capsys):
        code = main(["rules", "eval", pcs_file, "--station", "base",
                     "--bandwidth-mhz", "5", "--haat-m", "900"])
        out = capsys.readouterr().out
        assert code == 0
        assert out.splitlines()[0] == "490 W per MHz"

    def test_eval_out_of_domain_exit_two(self, pcs_file, capsys):
        code = main(["rules", "eval", pcs_file, "--station", "base", "--haat-m", "2500"])
        assert code == 2

    def test_graph_dot_has_three_classes(self, pcs_file, capsys):
        code = main(["rules", "graph", pcs_file])
        out = capsys.readouterr().out
        assert code == 0
        assert out.startswith("digraph")
        assert out.count('class="station_class"') == 3

    def test_graph_json_export(self, pcs_file, tmp_path, capsys):
        out_path = tmp_path / "graph.json"
        code = main(["rules", "graph", pcs_file, "--format", "json",
                     "--out", str(out_path)])
        assert code == 0
        data = json.loads(out_path.read_text())
        assert {"nodes", "edges"} <= set(data)

    def test_validate_ok(self, pcs_file, capsys):
        code = main(["rules", "validate", pcs_file])
        out = capsys.readouterr().out
        assert code == 0
        assert "3 station classes" in out

    def test_validate_malformed_exit_two_with_path(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"Band": {"Base": {"Max_eirp": {
            "HAAT_up_to_300m": "100 watts",
            "Height_Restrictions": [
                {"HAAT_up_to_1000m": "50 watts"},
                {"HAAT_up_to_500m": "80 watts"},
            ]}}}}), encoding="utf-8")
        code = main(["rules", "validate", str(bad)])
        err = capsys.readouterr().err
        assert code == 2
        assert "Band.Base" in err

    def test_ontology_render(self, pcs_file, capsys):
        code = main(["rules", "ontology", pcs_file])
        out = capsys.readouterr().out
        assert code == 0
        assert "MobileStation has a maximum EIRP of 2 watts" in out

    def test_gen_tests_jsonl(self, pcs_file, capsys):
        code = main(["rules", "gen-tests", pcs_file])
        out = capsys.readouterr().out
        assert code == 0
        cases = [json.loads(line) for line in out.splitlines()]
        assert all({"query", "expected"} <= set(c) for c in cases)
        assert any(c["query"]["station"] == "mobile" for c in cases)

    def test_extract_via_stub_llm(self, tmp_path, pcs_text, capsys):
        doc = tmp_path / "source.txt"
        doc.write_text("# Rules\n\nBase station limits vary by antenna height.",
                       encoding="utf-8")
        with WireStub({"/chat/completions": chat_route(lambda u: pcs_text)}) as stub:
            code = main(["rules", "extract", str(doc), "--llm-endpoint", stub.url])
        out = capsys.readouterr().out
        assert code == 0
        assert "PCS Bands Canada" in out

    def test_extract_always_malformed_exit_two(self, tmp_path, capsys):
        doc = tmp_path / "source.txt"
        doc.write_text("content", encoding="utf-8")
        with WireStub({"/chat/completions": chat_route(lambda u: "not json")}) as stub:
            code = main(["rules", "extract", str(doc), "--llm-endpoint", stub.url,
                         "--repair-rounds", "1"])
        assert code == 2


class TestEvalCommand:
    def _queryset(self, tmp_path, corpus) -> str:
        from regqa.corpus import load_corpus
        from regqa.vecindex import EmbeddingProvider
        loaded = load_corpus(corpus, EmbeddingProvider(kind="hashed", dim=256))
        needle = next(c for c in loaded.chunks if "zq77" in c.text)
        path = tmp_path / "queries.jsonl"
        path.write_text(json.dumps(
            {"query": "zq77 marker transmit", "expected_chunk_id": needle.chunk_id}) + "\n",
            encoding="utf-8")
        return str(path)

    def test_planted_queryset_recall_one(self, tmp_path, capsys):
        corpus = ingest(tmp_path, capsys)
        qs = self._queryset(tmp_path, corpus)
        code = main(["eval", qs, "--corpus", corpus])
        out = capsys.readouterr().out
        assert code == 0
        lines = out.splitlines()
        assert lines[0].split("\t") == ["config", "recall_at_k", "mrr", "k", "query_count"]
        assert lines[1].split("\t")[1] == "1.0000"

    def test_empty_queryset_exit_two(self, tmp_path, capsys):
        corpus = ingest(tmp_path, capsys)
        empty = tmp_path / "empty.jsonl"
        empty.write_text("", encoding="utf-8")
        assert main(["eval", str(empty), "--corpus", corpus]) == 2

    def test_sweep_prints_two_rows_and_report(self, tmp_path, capsys):
        corpus = ingest(tmp_path, capsys)
        qs = self._queryset(tmp_path, corpus)
        report = tmp_path / "report"
        code = main(["eval", qs, "--corpus", corpus,
                     "--sweep-max-tokens", "60,300", "--report-dir", str(report)])
        out = capsys.readouterr().out
        assert code == 0
        rows = [l for l in out.splitlines() if l.startswith("max_tokens=")]
        assert len(rows) == 2
        assert (report / "metrics.tsv").is_file()
        assert (report / "metrics.png").is_file()
        assert (report / "metrics.png").stat().st_size > 1000
