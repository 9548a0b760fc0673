import { ApiClient, ApiError } from "./api.js";
import type { StationQueryBody } from "./types.js";

/**
 * Rules calculator form. Every displayed number comes from the
 * /rules/evaluate response; there is no client-side rule math.
 */
export function rulesCalculator(api: ApiClient): HTMLElement {
  const root = document.createElement("section");
  root.className = "calculator";

  const form = document.createElement("form");

  const ruleset = document.createElement("input");
  ruleset.type = "text";
  ruleset.name = "ruleset";
  ruleset.value = "pcs";

  const station = document.createElement("select");
  station.name = "station";
  for (const value of ["base", "mobile"]) {
    const opt = document.createElement("option");
    opt.value = value;
    opt.textContent = value;
    station.appendChild(opt);
  }

  const bandwidth = document.createElement("input");
  bandwidth.type = "number";
  bandwidth.name = "bandwidth";
  bandwidth.value = "1";
  bandwidth.step = "any";

  const haat = document.createElement("input");
  haat.type = "number";
  haat.name = "haat";
  haat.value = "0";
  haat.step = "any";

  const urban = document.createElement("input");
  urban.type = "checkbox";
  urban.name = "urban";

  const evaluate = document.createElement("button");
  evaluate.type = "submit";
  evaluate.textContent = "evaluate";

  const labelled = (text: string, el: HTMLElement) => {
    const label = document.createElement("label");
    label.append(text, el);
    return label;
  };
  form.append(
    labelled("ruleset", ruleset),
    labelled("station", station),
    labelled("bandwidth MHz", bandwidth),
    labelled("HAAT m", haat),
    labelled("urban", urban),
    evaluate,
  );
  root.appendChild(form);

  const result = document.createElement("div");
  result.className = "limit-result";
  root.appendChild(result);

  form.onsubmit = async (ev) => {
    ev.preventDefault();
    const body: StationQueryBody = {
      ruleset_id: ruleset.value,
      station: station.value as "base" | "mobile",
      occupied_bandwidth_mhz: Number(bandwidth.value),
      haat_m: Number(haat.value),
      urban: urban.checked,
    };
    result.replaceChildren();
    try {
      const limit = await api.evaluateRules(body);
      const value = document.createElement("div");
      value.className = "limit-value";
      const unit = limit.basis === "per_mhz" ? "W per MHz" : "W";
      value.textContent = `${limit.value_watts} ${unit}`;
      const path = document.createElement("ol");
      path.className = "rule-path";
      for (const step of limit.applied_rule_path) {
        const li = document.createElement("li");
        li.textContent = step;
        path.appendChild(li);
      }
      result.append(value, path);
    } catch (err) {
      const msg = document.createElement("div");
      msg.className = err instanceof ApiError && err.status === 422
        ? "limit-error out-of-domain"
        : "limit-error";
      msg.textContent = err instanceof ApiError ? err.message : String(err);
      result.appendChild(msg);
    }
  };

  return root;
}
