// Frozen copies of real service responses (captured from the running
// backend) so UI fidelity is checked against genuine payload shapes.

import type { AnswerPayload, PowerLimitPayload } from "../src/types.js";

export const ANSWERED: AnswerPayload = {
  status: "answered",
  text: "Per [S0], mobile stations are capped at 2 watts EIRP.",
  model_name: "stub",
  prompt_token_estimate: 139,
  citations: [
    {
      window_index: 0,
      doc_id: "srsp-510",
      ordinal_range: [1, 3],
      heading_path: ["PCS band rules"],
      text:
        "This document collects the radiated power conditions that apply to " +
        "stations operating in the personal communication services band, " +
        "covering both fixed infrastructure and subscriber equipment across " +
        "urban and rural deployments.\n\nMobile stations\n\nMobile stations " +
        "are limited to a flat two watt EIRP ceiling in the PCS band " +
        "regardless of antenna height, siting, or occupied bandwidth.\n\n" +
        "Base stations\n\nBase station limits depend on antenna height above " +
        "average terrain and on urban siting, with tiered ceilings that fall " +
        "as the antenna rises above the surrounding terrain profile.",
    },
  ],
};

export const REFUSED: AnswerPayload = {
  status: "refused",
  text: "I don't know: no grounded context was found for this question.",
  model_name: "stub",
  prompt_token_estimate: 0,
  citations: [],
};

export const RULES_PLAIN: PowerLimitPayload = {
  value_watts: 3280.0,
  basis: "total",
  applied_rule_path: [
    "Base Stations Less Equal 1MHz",
    "default tier: HAAT 250 m <= 300 m -> 3280 W",
  ],
};

export const RULES_URBAN: PowerLimitPayload = {
  value_watts: 1640.0,
  basis: "total",
  applied_rule_path: [
    "Base Stations Less Equal 1MHz",
    "default tier: HAAT 250 m <= 300 m -> 3280 W",
    "urban area: min(3280, 1640) -> 1640 W",
  ],
};

export const OUT_OF_DOMAIN = {
  status: 422,
  body: {
    error:
      "Base Stations Less Equal 1MHz: HAAT 2500 m exceeds the last tier; " +
      "the rules are silent above it",
  },
};

export const FEEDBACK_REPLY = { entry_id: "fb-000001" };
