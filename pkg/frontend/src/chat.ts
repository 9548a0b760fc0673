import { ApiClient, ApiError } from "./api.js";
import { feedbackControls } from "./feedback.js";
import type { AnswerPayload, CitationPayload } from "./types.js";

/**
 * Chat console: question box, transcript, citation source panel.
 *
 * Stateless with respect to the corpus: every rendered answer, number, and
 * citation comes straight from the /answer payload. One request is in
 * flight at a time; a failed request surfaces as a retryable banner and
 * never clears the transcript.
 */
export function chatView(api: ApiClient): HTMLElement {
  const root = document.createElement("section");
  root.className = "chat";

  const banner = document.createElement("div");
  banner.className = "banner hidden";
  root.appendChild(banner);

  const transcript = document.createElement("ol");
  transcript.className = "transcript";
  root.appendChild(transcript);

  const source = document.createElement("aside");
  source.className = "source-panel hidden";
  root.appendChild(source);

  const form = document.createElement("form");
  form.className = "ask";
  const input = document.createElement("input");
  input.type = "text";
  input.placeholder = "ask about the corpus";
  const ask = document.createElement("button");
  ask.type = "submit";
  ask.textContent = "ask";
  form.appendChild(input);
  form.appendChild(ask);
  root.appendChild(form);

  function showSource(citation: CitationPayload) {
    source.replaceChildren();
    source.classList.remove("hidden");
    const crumb = document.createElement("div");
    crumb.className = "breadcrumb";
    crumb.textContent = [citation.doc_id, ...citation.heading_path].join(" > ");
    const range = document.createElement("div");
    range.className = "ordinal-range";
    range.textContent = `chunks ${citation.ordinal_range[0]}..${citation.ordinal_range[1]}`;
    const text = document.createElement("pre");
    text.className = "window-text";
    text.textContent = citation.text;
    source.append(crumb, range, text);
  }

  function renderTurn(question: string, payload: AnswerPayload) {
    const turn = document.createElement("li");
    turn.className = `turn ${payload.status}`;

    const q = document.createElement("div");
    q.className = "question";
    q.textContent = question;
    turn.appendChild(q);

    const a = document.createElement("div");
    a.className = "answer";
    a.textContent = payload.text;
    turn.appendChild(a);

    if (payload.status === "refused") {
      const badge = document.createElement("span");
      badge.className = "refusal-badge";
      badge.textContent = "no grounded answer";
      turn.appendChild(badge);
    } else {
      const cits = document.createElement("ul");
      cits.className = "citations";
      for (const citation of payload.citations) {
        const li = document.createElement("li");
        const open = document.createElement("button");
        open.type = "button";
        open.className = "citation";
        open.textContent = `[S${citation.window_index}] ${citation.doc_id}`;
        open.onclick = () => showSource(citation);
        li.appendChild(open);
        cits.appendChild(li);
      }
      turn.appendChild(cits);
      turn.appendChild(feedbackControls(api, question, payload.text));
    }
    transcript.appendChild(turn);
  }

  let inFlight = false;

  async function submit(question: string) {
    if (inFlight || !question.trim()) return;
    inFlight = true;
    ask.disabled = true;
    banner.classList.add("hidden");
    try {
      const payload = await api.answer(question);
      renderTurn(question, payload);
      input.value = "";
    } catch (err) {
      banner.replaceChildren();
      banner.classList.remove("hidden");
      const label = document.createElement("span");
      label.textContent = err instanceof ApiError && err.status === 502
        ? "answer backend unavailable - try again"
        : `request failed: ${err}`;
      const retry = document.createElement("button");
      retry.type = "button";
      retry.className = "retry";
      retry.textContent = "retry";
      retry.onclick = () => void submit(question);
      banner.append(label, retry);
    } finally {
      inFlight = false;
      ask.disabled = false;
    }
  }

  form.onsubmit = (ev) => {
    ev.preventDefault();
    void submit(input.value);
  };

  return root;
}
