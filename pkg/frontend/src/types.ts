// Wire types mirroring the service's JSON API (snake_case fields).

export type AqiClass =
  | "good"
  | "moderate"
  | "unhealthy-sensitive"
  | "unhealthy"
  | "very-unhealthy"
  | "severe";

export type Verdict = "suitable" | "caution" | "unsuitable";

export const POLLUTANT_ORDER = ["pm25", "pm10", "so2", "o3", "no2", "co", "aqi"] as const;
export type PollutantName = (typeof POLLUTANT_ORDER)[number];

export interface TriggeredRule {
  symptom: string;
  pollutant: string;
  value: number;
  threshold: number;
  severity: "caution" | "unsuitable";
}

export interface Recommendation {
  verdict: Verdict;
  advisory_key: string;
  aqi_class: AqiClass;
  triggered: TriggeredRule[];
}

export interface RecommendResponse {
  pollutants: Record<PollutantName, number>;
  units: Record<string, string>;
  aqi_class: AqiClass;
  model: {
    architecture: string;
    checkpoint_sha256: string;
    input_size: number[];
  };
  latency_ms: number;
  recommendation: Recommendation;
  symptoms: string[];
}

export interface ModelInfo {
  architecture: string;
  checkpoint_sha256: string;
  input_size: number[];
  symptom_vocabulary: string[];
}

export const DEFAULT_SYMPTOMS = [
  "asthma",
  "copd",
  "heart-condition",
  "pregnancy",
  "child",
  "elderly",
  "eye-irritation",
  "allergy",
  "none",
];
