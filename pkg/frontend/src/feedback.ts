import { ApiClient } from "./api.js";
import type { Rating } from "./types.js";

const RATINGS: Rating[] = ["correct", "incorrect", "unsure"];

/**
 * Per-turn rating widget. Submit stays disabled until a rating is chosen,
 * and the whole widget locks after one successful post so a turn can never
 * produce two feedback entries.
 */
export function feedbackControls(api: ApiClient, question: string,
                                 answerText: string): HTMLElement {
  const root = document.createElement("div");
  root.className = "feedback";

  let chosen: Rating | null = null;
  let submitted = false;

  const buttons = new Map<Rating, HTMLButtonElement>();
  for (const rating of RATINGS) {
    const btn = document.createElement("button");
    btn.type = "button";
    btn.className = "rating";
    btn.dataset.rating = rating;
    btn.textContent = rating;
    btn.onclick = () => {
      if (submitted) return;
      chosen = rating;
      for (const [r, b] of buttons) b.classList.toggle("selected", r === rating);
      submit.disabled = false;
    };
    buttons.set(rating, btn);
    root.appendChild(btn);
  }

  const note = document.createElement("input");
  note.type = "text";
  note.placeholder = "reviewer note (optional)";
  note.className = "note";
  root.appendChild(note);

  const submit = document.createElement("button");
  submit.type = "button";
  submit.className = "submit-feedback";
  submit.textContent = "send feedback";
  submit.disabled = true; // no rating selected yet
  root.appendChild(submit);

  const status = document.createElement("span");
  status.className = "feedback-status";
  root.appendChild(status);

  submit.onclick = async () => {
    if (submitted || chosen === null) return;
    submitted = true; // block duplicate submits before the request resolves
    submit.disabled = true;
    note.disabled = true;
    for (const b of buttons.values()) b.disabled = true;
    try {
      const { entry_id } = await api.feedback({
        question,
        answer_text: answerText,
        rating: chosen,
        note: note.value,
      });
      status.textContent = `recorded as ${entry_id}`;
    } catch (err) {
      status.textContent = `feedback failed: ${err}`;
      submitted = false;
      submit.disabled = false;
      note.disabled = false;
      for (const b of buttons.values()) b.disabled = false;
    }
  };

  return root;
}
