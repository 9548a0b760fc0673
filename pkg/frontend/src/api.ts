import type { AnswerPayload, FeedbackBody, PowerLimitPayload, StationQueryBody } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

/** Thin client for the documented service endpoints; no state of its own. */
export class ApiClient {
  constructor(private baseUrl: string = "") {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    let resp: Response;
    try {
      resp = await fetch(this.baseUrl + path, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${err}`);
    }
    const data = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      const message = (data as { error?: string }).error ?? `HTTP ${resp.status}`;
      throw new ApiError(resp.status, message);
    }
    return data as T;
  }

  answer(question: string): Promise<AnswerPayload> {
    return this.post<AnswerPayload>("/answer", { question });
  }

  feedback(body: FeedbackBody): Promise<{ entry_id: string }> {
    return this.post<{ entry_id: string }>("/feedback", body);
  }

  evaluateRules(body: StationQueryBody): Promise<PowerLimitPayload> {
    return this.post<PowerLimitPayload>("/rules/evaluate", body);
  }
}
