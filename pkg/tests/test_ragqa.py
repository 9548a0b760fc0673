import pytest

from regqa.chunker import ChunkPolicy, ChunkStore, chunk_document, count_tokens
from regqa.errors import BudgetTooSmallError, LlmProtocolError, LlmUnreachableError
from regqa.ingest import parse_marked_text
from regqa.lexindex import build_lexical_index
from regqa.ragqa import DEFAULT_TEMPLATE, LlmClient, PromptTemplate, \
    REFUSAL_TEXT, answer_question, answer_with_context, assemble_prompt, \
    attribute_citations, source_tag
from regqa.retriever import ContextWindow, HybridPolicy, RetrievalPipeline
from regqa.testing import DownLlm, EchoLlm, StubLlm
from regqa.vecindex import EmbeddingProvider, build_vector_index
from wire_stubs import WireStub, chat_route


def window(doc_id: str, text: str, score: float, lo: int = 0, hi: int = 0,
           heading=("Top",)) -> ContextWindow:
    return ContextWindow(doc_id=doc_id, lo=lo, hi=hi, text=text,
                         seed_chunk_ids=[f"{doc_id}#{lo}"], score=score,
                         heading_path=list(heading))


def make_pipeline(texts: list[str], doc_id: str = "src", **policy_kw) -> RetrievalPipeline:
    doc = parse_marked_text("\n\n".join(texts), doc_id)
    chunks = chunk_document(doc, ChunkPolicy(max_tokens=60, overlap_tokens=0, min_tokens=5))
    provider = EmbeddingProvider(kind="hashed", dim=64)
    return RetrievalPipeline(
        store=ChunkStore(chunks),
        lex=build_lexical_index(chunks),
        vec=build_vector_index(chunks, provider),
        provider=provider,
        policy=HybridPolicy(**{"final_k": 4, **policy_kw}),
    )


class TestPromptTemplate:
    def test_default_has_both_slots(self):
        assert "{context}" in DEFAULT_TEMPLATE.text
        assert "{question}" in DEFAULT_TEMPLATE.text

    def test_missing_slot_rejected(self):
        with pytest.raises(ValueError):
            PromptTemplate("only {context} here")

    def test_duplicate_slot_rejected(self):
        with pytest.raises(ValueError):
            PromptTemplate("{context} {context} {question}")

    def test_render_is_injection_safe(self):
        t = PromptTemplate("A {context} B {question} C")
        out = t.render("ctx {question} literal", "why?")
        assert out == "A ctx {question} literal B why? C"


class TestAssemblePrompt:
    def test_zero_windows_empty_context(self):
        prompt, included = assemble_prompt(DEFAULT_TEMPLATE, [], "what?", 500)
        assert included == []
        assert "what?" in prompt
        assert "[S0]" not in prompt

    def test_budget_fits_only_best_window(self):
        w_small_score = window("doc-a", "alpha " * 50, score=0.3)
        w_big_score = window("doc-b", "beta " * 50, score=0.9)
        base = count_tokens(DEFAULT_TEMPLATE.text) + count_tokens("q")
        budget = base + 50 + count_tokens(source_tag(0, w_big_score)) + 5
        prompt, included = assemble_prompt(
            DEFAULT_TEMPLATE, [w_small_score, w_big_score], "q", budget)
        assert [w.doc_id for w in included] == ["doc-b"]
        assert "beta" in prompt and "alpha" not in prompt

    def test_both_windows_fit_arithmetic(self):
        # template+question 150 tokens (the two slot words count), windows
        # 100 and 120 tag-inclusive, budget 400 -> both fit
        template = PromptTemplate(" ".join(f"t{i}" for i in range(142)) +
                                  " {context} {question}")
        question = " ".join(f"q{i}" for i in range(6))
        assert count_tokens(template.text) + count_tokens(question) == 150
        w1 = window("a", " ".join(f"a{i}" for i in range(97)), 0.9)  # +3 tag tokens
        w2 = window("b", " ".join(f"b{i}" for i in range(117)), 0.5)
        assert count_tokens(source_tag(0, w1)) + count_tokens(w1.text) == 100
        assert count_tokens(source_tag(1, w2)) + count_tokens(w2.text) == 120
        prompt, included = assemble_prompt(template, [w1, w2], question, 400)
        assert len(included) == 2
        assert count_tokens(prompt) <= 400

    def test_budget_below_base_raises(self):
        with pytest.raises(BudgetTooSmallError):
            assemble_prompt(DEFAULT_TEMPLATE, [], "question words", 10)

    def test_windows_tagged_in_packed_order(self):
        w1 = window("doc-a", "alpha text", 0.9)
        w2 = window("doc-b", "beta text", 0.5)
        prompt, included = assemble_prompt(DEFAULT_TEMPLATE, [w2, w1], "q", 800)
        assert [w.doc_id for w in included] == ["doc-a", "doc-b"]
        assert prompt.index("[S0] doc-a") < prompt.index("[S1] doc-b")

    def test_heading_path_in_tag(self):
        w = window("doc-a", "text", 0.5, heading=("Rules", "Power"))
        prompt, _ = assemble_prompt(DEFAULT_TEMPLATE, [w], "q", 500)
        assert "[S0] doc-a Rules > Power" in prompt


class TestAttributeCitations:
    def _windows(self, n):
        return [window(f"d{i}", f"text {i}", 1.0 - i / 10, lo=i, hi=i) for i in range(n)]

    def test_tagged_window_cited(self):
        cits = attribute_citations("per [S1], the limit is 2 W", self._windows(3))
        assert [(c.window_index, c.doc_id) for c in cits] == [(1, "d1")]

    def test_no_tags_cites_all(self):
        cits = attribute_citations("no tags at all", self._windows(2))
        assert [c.window_index for c in cits] == [0, 1]

    def test_out_of_range_tag_falls_back_to_all(self):
        cits = attribute_citations("see [S9]", self._windows(2))
        assert [c.window_index for c in cits] == [0, 1]

    def test_duplicate_tags_cited_once(self):
        cits = attribute_citations("[S0] and [S0] again", self._windows(2))
        assert [c.window_index for c in cits] == [0]


class TestAnswerQuestion:
    def test_no_match_refuses_without_llm_call(self):
        pipe = make_pipeline(["regulatory power limits for base stations"])
        llm = StubLlm(["should never be returned"])
        answer = answer_question(llm, pipe, "qqqq zzzz wwww")
        assert answer.status == "refused"
        assert answer.text == REFUSAL_TEXT
        assert answer.citations == []
        assert llm.call_count == 0

    def test_echo_stub_answer_carries_source_tag(self):
        pipe = make_pipeline(["the mobile ceiling is two watts of radiated power"])
        llm = EchoLlm()
        answer, included = answer_with_context(llm, pipe, "mobile ceiling watts")
        assert answer.status == "answered"
        assert "[S0]" in answer.text
        assert included and included[0].doc_id == "src"
        assert answer.prompt_token_estimate == count_tokens(llm.prompts[0])

    def test_citations_reference_prompt_windows(self):
        pipe = make_pipeline(["alpha topic sentence one", "beta topic sentence two"])
        llm = EchoLlm()
        answer, included = answer_with_context(llm, pipe, "alpha topic")
        for cit in answer.citations:
            assert 0 <= cit.window_index < len(included)
            w = included[cit.window_index]
            assert (cit.doc_id, cit.ordinal_lo, cit.ordinal_hi) == (w.doc_id, w.lo, w.hi)

    def test_llm_down_with_context_raises(self):
        pipe = make_pipeline(["searchable content here"])
        with pytest.raises(LlmUnreachableError):
            answer_question(DownLlm(), pipe, "searchable content")

    def test_empty_question_rejected(self):
        pipe = make_pipeline(["text"])
        with pytest.raises(ValueError):
            answer_question(StubLlm(), pipe, "   ")

    def test_prompt_deterministic_across_runs(self):
        prompts = []
        for _ in range(2):
            pipe = make_pipeline(["alpha beta gamma delta", "epsilon zeta eta theta"])
            llm = EchoLlm()
            answer_question(llm, pipe, "alpha epsilon")
            prompts.append(llm.prompts[0])
        assert prompts[0] == prompts[1]

    def test_temperature_zero_default(self):
        client = LlmClient(endpoint="http://127.0.0.1:9", model_name="m")
        assert client.temperature == 0.0


class TestLlmClientWire:
    def test_round_trip(self):
        with WireStub({"/chat/completions": chat_route(lambda u: f"echo: {u[:20]}")}) as stub:
            client = LlmClient(endpoint=stub.url, model_name="m", max_output_tokens=64)
            reply = client.complete("hello there")
            assert reply.startswith("echo: hello there")
            path, body = stub.requests[0]
            assert body["model"] == "m"
            assert body["temperature"] == 0.0
            assert body["max_tokens"] == 64
            roles = [m["role"] for m in body["messages"]]
            assert roles == ["system", "user"]
            assert body["messages"][0]["content"] == ""

    def test_unreachable(self):
        client = LlmClient(endpoint="http://127.0.0.1:9", model_name="m", timeout=0.5)
        with pytest.raises(LlmUnreachableError):
            client.complete("x")

    def test_malformed_reply(self):
        with WireStub({"/chat/completions": lambda body: (200, {"nope": 1})}) as stub:
            client = LlmClient(endpoint=stub.url, model_name="m")
            with pytest.raises(LlmProtocolError):
                client.complete("x")

    def test_http_error_status(self):
        with WireStub({"/chat/completions": lambda body: (500, {"error": "boom"})}) as stub:
            client = LlmClient(endpoint=stub.url, model_name="m")
            with pytest.raises(LlmProtocolError):
                client.complete("x")
