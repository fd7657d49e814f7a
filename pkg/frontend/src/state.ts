import { RecommendResponse } from "./types";

export type RequestStatus = "idle" | "loading" | "error" | "done";

export interface UiError {
  kind: "server" | "symptom" | "network";
  code: string;
  message: string;
}

export interface UiState {
  image: File | null;
  symptoms: string[]; // always nonempty; defaults to ["none"]
  status: RequestStatus;
  response: RecommendResponse | null;
  error: UiError | null;
}

export function initialState(): UiState {
  return { image: null, symptoms: ["none"], status: "idle", response: null, error: null };
}

export function canSubmit(state: UiState): boolean {
  return state.image !== null && state.status !== "loading";
}

export function selectImage(state: UiState, image: File): UiState {
  return { ...state, image, error: null };
}

// Multi-select with "none" as the mutually exclusive empty choice:
// picking "none" clears the rest, picking anything else drops "none".
export function toggleSymptom(state: UiState, symptom: string): UiState {
  if (symptom === "none") {
    return { ...state, symptoms: ["none"] };
  }
  let chosen = state.symptoms.filter((s) => s !== "none");
  if (chosen.includes(symptom)) {
    chosen = chosen.filter((s) => s !== symptom);
  } else {
    chosen = [...chosen, symptom];
  }
  return { ...state, symptoms: chosen.length ? chosen : ["none"] };
}

export function submitStarted(state: UiState): UiState {
  return { ...state, status: "loading", error: null };
}

export function submitSucceeded(state: UiState, response: RecommendResponse): UiState {
  return { ...state, status: "done", response, error: null };
}

export function submitFailed(state: UiState, error: UiError): UiState {
  // a failed request keeps the previous successful response out of view
  return { ...state, status: "error", response: null, error };
}
