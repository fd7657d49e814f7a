import { UiError } from "./state";
import {
  AqiClass,
  POLLUTANT_ORDER,
  Recommendation,
  RecommendResponse,
} from "./types";

// Fixed six-band AQI color scale.
export const AQI_COLORS: Record<AqiClass, string> = {
  good: "#00e400",
  moderate: "#ffff00",
  "unhealthy-sensitive": "#ff7e00",
  unhealthy: "#ff0000",
  "very-unhealthy": "#8f3f97",
  severe: "#7e0023",
};

export const AQI_LABELS: Record<AqiClass, string> = {
  good: "Good",
  moderate: "Moderate",
  "unhealthy-sensitive": "Unhealthy for Sensitive Groups",
  unhealthy: "Unhealthy",
  "very-unhealthy": "Very Unhealthy",
  severe: "Severe",
};

export const VERDICT_LABELS: Record<string, string> = {
  suitable: "Suitable: air quality at this location looks fine for you.",
  caution: "Caution: consider limiting time outdoors at this location.",
  unsuitable: "Unsuitable: this location is not advisable for you right now.",
};

// Every displayed number is the API value verbatim; the UI never rounds,
// rescales, or recomputes.
export function verbatim(value: number): string {
  return String(value);
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderPollutantTable(doc: Document, response: RecommendResponse): HTMLTableElement {
  const table = el(doc, "table", "pollutants");
  const thead = el(doc, "thead");
  const headRow = el(doc, "tr");
  for (const title of ["Parameter", "Value", "Unit"]) {
    headRow.appendChild(el(doc, "th", undefined, title));
  }
  thead.appendChild(headRow);
  table.appendChild(thead);

  const body = el(doc, "tbody");
  for (const name of POLLUTANT_ORDER) {
    const row = el(doc, "tr");
    row.dataset.pollutant = name;
    row.appendChild(el(doc, "td", undefined, name));
    row.appendChild(el(doc, "td", "value", verbatim(response.pollutants[name])));
    row.appendChild(el(doc, "td", undefined, response.units[name] ?? ""));
    body.appendChild(row);
  }
  table.appendChild(body);
  return table;
}

export function renderAqiBadge(doc: Document, aqiClass: AqiClass): HTMLElement {
  const badge = el(doc, "span", "aqi-badge", AQI_LABELS[aqiClass]);
  badge.dataset.aqiClass = aqiClass;
  badge.style.backgroundColor = AQI_COLORS[aqiClass];
  return badge;
}

export function renderVerdictBanner(doc: Document, rec: Recommendation): HTMLElement {
  const banner = el(doc, "div", `verdict verdict-${rec.verdict}`);
  banner.dataset.verdict = rec.verdict;
  banner.appendChild(el(doc, "strong", undefined, VERDICT_LABELS[rec.verdict]));
  if (rec.triggered.length) {
    const list = el(doc, "ul", "triggered-rules");
    for (const rule of rec.triggered) {
      const item = el(
        doc,
        "li",
        undefined,
        `${rule.symptom}: ${rule.pollutant} at ${verbatim(rule.value)} crossed the ` +
          `${rule.severity} threshold ${verbatim(rule.threshold)}`,
      );
      item.dataset.pollutant = rule.pollutant;
      list.appendChild(item);
    }
    banner.appendChild(list);
  }
  return banner;
}

// Each failure kind gets its own distinct, human-readable message; the
// server's machine code is always shown alongside.
export function errorMessage(error: UiError): string {
  if (error.kind === "network") {
    return `Network problem: ${error.message} You can retry once the connection is back. [${error.code}]`;
  }
  switch (error.code) {
    case "undecodable_image":
      return `That file could not be read as an image. Please upload a PNG or JPEG photo. [${error.code}]`;
    case "image_too_small":
      return `That image is too small for analysis; use at least 32x32 pixels. [${error.code}]`;
    case "image_too_large":
      return `That image is too large to upload (limit 10 MiB). [${error.code}]`;
    case "no_checkpoint":
      return `The prediction service has no model loaded right now; try again later. [${error.code}]`;
    default:
      return `The service rejected the request: ${error.message} [${error.code}]`;
  }
}

export function renderError(doc: Document, error: UiError): HTMLElement {
  const box = el(doc, "div", "error-box", errorMessage(error));
  box.dataset.errorCode = error.code;
  return box;
}

export function renderSymptomField(
  doc: Document,
  vocabulary: string[],
  selected: string[],
  onToggle: (symptom: string) => void,
): HTMLElement {
  const field = el(doc, "fieldset", "symptoms");
  field.appendChild(el(doc, "legend", undefined, "Your health conditions"));
  for (const symptom of vocabulary) {
    const label = el(doc, "label");
    const box = el(doc, "input") as HTMLInputElement;
    box.type = "checkbox";
    box.value = symptom;
    box.checked = selected.includes(symptom);
    box.addEventListener("change", () => onToggle(symptom));
    label.appendChild(box);
    label.appendChild(doc.createTextNode(` ${symptom}`));
    field.appendChild(label);
  }
  return field;
}
