"""Grounded prompt assembly, chat completion, and citation attribution.

The empty-context case is refused in code, before any model call: a prompt
asking the model not to invent answers is a request, a refusal returned
without calling it is a guarantee. Context windows carry bracketed source
tags ("[S0] doc heading > path") so citations can be attributed by plain
tag matching, with no structured-output contract on the model.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import requests

from .chunker import count_tokens
from .errors import BudgetTooSmallError, LlmProtocolError, LlmUnreachableError
from .retriever import ContextWindow, RetrievalPipeline

ANSWERED = "answered"
REFUSED = "refused"

REFUSAL_TEXT = "I don't know: no grounded context was found for this question."

_TAG_RE = re.compile(r"\[S(\d+)\]")


@dataclass(frozen=True)
class PromptTemplate:
    """Template text with exactly one {context} and one {question} slot."""

    text: str

    def __post_init__(self):
        for slot in ("{context}", "{question}"):
            if self.text.count(slot) != 1:
                raise ValueError(f"template must contain {slot} exactly once")

    def render(self, context: str, question: str) -> str:
        # slice-assemble so braces inside the substituted values stay inert
        ci = self.text.index("{context}")
        qi = self.text.index("{question}")
        first, second = sorted([(ci, "{context}", context), (qi, "{question}", question)])
        out = (self.text[:first[0]] + first[2]
               + self.text[first[0] + len(first[1]):second[0]] + second[2]
               + self.text[second[0] + len(second[1]):])
        return out


DEFAULT_TEMPLATE = PromptTemplate(
    "You are a helpful, respectful and honest assistant. "
    "Use the following context information to answer the user's question. "
    "If you don't know the answer, just say that you don't know, "
    "don't try to make up an answer. "
    "Context: {context} Question: {question}"
)


@dataclass(frozen=True)
class Citation:
    window_index: int
    doc_id: str
    ordinal_lo: int
    ordinal_hi: int

    def to_dict(self) -> dict:
        return {
            "window_index": self.window_index,
            "doc_id": self.doc_id,
            "ordinal_range": [self.ordinal_lo, self.ordinal_hi],
        }


@dataclass(frozen=True)
class Answer:
    status: str  # "answered" | "refused"
    text: str
    citations: list[Citation]
    model_name: str
    prompt_token_estimate: int

    def __post_init__(self):
        if self.status not in (ANSWERED, REFUSED):
            raise ValueError(f"unknown answer status {self.status!r}")
        if self.status == REFUSED and self.citations:
            raise ValueError("a refused answer cannot carry citations")

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "text": self.text,
            "citations": [c.to_dict() for c in self.citations],
            "model_name": self.model_name,
            "prompt_token_estimate": self.prompt_token_estimate,
        }


class LlmClient:
    """OpenAI-compatible chat-completions client.

    POST {endpoint}/chat/completions with an empty system message and the
    prompt as the user message; the template already carries the persona.
    """

    def __init__(self, endpoint: str, model_name: str, temperature: float = 0.0,
                 max_output_tokens: int = 1024, timeout: float = 60.0,
                 api_key: str | None = None):
        if temperature < 0:
            raise ValueError("temperature must be >= 0")
        self.endpoint = endpoint
        self.model_name = model_name
        self.temperature = temperature
        self.max_output_tokens = max_output_tokens
        self.timeout = timeout
        self.api_key = api_key

    def complete(self, prompt: str) -> str:
        url = self.endpoint.rstrip("/") + "/chat/completions"
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model_name,
            "messages": [
                {"role": "system", "content": ""},
                {"role": "user", "content": prompt},
            ],
            "temperature": self.temperature,
            "max_tokens": self.max_output_tokens,
        }
        try:
            resp = requests.post(url, json=body, headers=headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise LlmUnreachableError(f"chat endpoint {url}: {exc}") from exc
        if resp.status_code != 200:
            raise LlmProtocolError(f"chat endpoint {url}: HTTP {resp.status_code}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise LlmProtocolError(f"chat endpoint {url}: malformed response ({exc})") from exc
        if not isinstance(content, str):
            raise LlmProtocolError(f"chat endpoint {url}: non-text content")
        return content


def source_tag(index: int, window: ContextWindow) -> str:
    path = " > ".join(window.heading_path)
    return f"[S{index}] {window.doc_id} {path}".rstrip()


def assemble_prompt(template: PromptTemplate, windows: list[ContextWindow],
                    question: str, budget_tokens: int) -> tuple[str, list[ContextWindow]]:
    """Pack windows by descending score into the token budget.

    Each included window is prefixed with its source tag; windows that do
    not fit are dropped and packing continues with the next one.
    """
    base = count_tokens(template.text) + count_tokens(question)
    if budget_tokens <= base:
        raise BudgetTooSmallError(
            f"budget {budget_tokens} cannot fit template and question ({base} tokens)")
    ordered = sorted(windows, key=lambda w: (-w.score, w.doc_id, w.lo))
    included: list[ContextWindow] = []
    used = base
    for window in ordered:
        # tag token count is index-independent: "S<digits>" is one token run
        cost = count_tokens(source_tag(0, window)) + count_tokens(window.text)
        if used + cost <= budget_tokens:
            included.append(window)
            used += cost
    context = "\n\n".join(
        f"{source_tag(i, w)}\n{w.text}" for i, w in enumerate(included))
    return template.render(context, question), included


def attribute_citations(answer_text: str,
                        included: list[ContextWindow]) -> list[Citation]:
    """Cite the windows whose tags appear in the answer; all of them if none do."""
    matched = sorted({int(m) for m in _TAG_RE.findall(answer_text)
                      if int(m) < len(included)})
    indices = matched if matched else list(range(len(included)))
    return [Citation(i, included[i].doc_id, included[i].lo, included[i].hi)
            for i in indices]


@dataclass(frozen=True)
class QaConfig:
    template: PromptTemplate = DEFAULT_TEMPLATE
    budget_tokens: int = 3000


def answer_with_context(llm, pipeline: RetrievalPipeline, question: str,
                        cfg: QaConfig | None = None
                        ) -> tuple[Answer, list[ContextWindow]]:
    """Run the full grounded QA flow; also return the prompt's windows.

    Zero retrieved windows (or none fitting the budget) short-circuits to a
    refusal without any model call.
    """
    if not question.strip():
        raise ValueError("question must be non-empty")
    cfg = cfg or QaConfig()
    windows = pipeline.retrieve_windows(question)
    if not windows:
        return refusal_answer(llm), []
    prompt, included = assemble_prompt(cfg.template, windows, question, cfg.budget_tokens)
    if not included:
        return refusal_answer(llm), []
    text = llm.complete(prompt)
    citations = attribute_citations(text, included)
    answer = Answer(
        status=ANSWERED,
        text=text,
        citations=citations,
        model_name=llm.model_name,
        prompt_token_estimate=count_tokens(prompt),
    )
    return answer, included


def refusal_answer(llm) -> Answer:
    """The fixed refusal returned when no grounded context exists."""
    return Answer(
        status=REFUSED,
        text=REFUSAL_TEXT,
        citations=[],
        model_name=getattr(llm, "model_name", ""),
        prompt_token_estimate=0,
    )


def answer_question(llm, pipeline: RetrievalPipeline, question: str,
                    cfg: QaConfig | None = None) -> Answer:
    """Grounded answer to one question; see answer_with_context."""
    answer, _ = answer_with_context(llm, pipeline, question, cfg)
    return answer
