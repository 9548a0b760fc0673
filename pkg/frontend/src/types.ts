export interface CitationPayload {
  window_index: number;
  doc_id: string;
  ordinal_range: [number, number];
  heading_path: string[];
  text: string;
}

export interface AnswerPayload {
  status: "answered" | "refused";
  text: string;
  model_name: string;
  prompt_token_estimate: number;
  citations: CitationPayload[];
}

export interface PowerLimitPayload {
  value_watts: number;
  basis: "total" | "per_mhz";
  applied_rule_path: string[];
}

export type Rating = "correct" | "incorrect" | "unsure";

export interface FeedbackBody {
  question: string;
  answer_text: string;
  rating: Rating;
  note: string;
}

export interface StationQueryBody {
  ruleset_id: string;
  station: "base" | "mobile";
  occupied_bandwidth_mhz: number;
  haat_m: number;
  urban: boolean;
}
