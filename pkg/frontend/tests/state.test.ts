import { describe, expect, it } from "vitest";

import {
  canSubmit,
  initialState,
  selectImage,
  submitFailed,
  submitStarted,
  submitSucceeded,
  toggleSymptom,
} from "../src/state";
import { RecommendResponse } from "../src/types";

const fakeFile = new File(["bytes"], "photo.png", { type: "image/png" });

describe("UiState", () => {
  it("starts idle with symptoms defaulting to none and submit disabled", () => {
    const state = initialState();
    expect(state.status).toBe("idle");
    expect(state.symptoms).toEqual(["none"]);
    expect(state.image).toBeNull();
    expect(canSubmit(state)).toBe(false);
  });

  it("enables submit once an image is chosen", () => {
    const state = selectImage(initialState(), fakeFile);
    expect(canSubmit(state)).toBe(true);
  });

  it("keeps submit disabled while a request is in flight", () => {
    const state = submitStarted(selectImage(initialState(), fakeFile));
    expect(state.status).toBe("loading");
    expect(canSubmit(state)).toBe(false);
  });

  it("adds and removes symptoms, dropping the none placeholder", () => {
    let state = initialState();
    state = toggleSymptom(state, "asthma");
    expect(state.symptoms).toEqual(["asthma"]);
    state = toggleSymptom(state, "elderly");
    expect(state.symptoms).toEqual(["asthma", "elderly"]);
    state = toggleSymptom(state, "asthma");
    expect(state.symptoms).toEqual(["elderly"]);
  });

  it("choosing none clears every other symptom", () => {
    let state = initialState();
    state = toggleSymptom(state, "asthma");
    state = toggleSymptom(state, "copd");
    state = toggleSymptom(state, "none");
    expect(state.symptoms).toEqual(["none"]);
  });

  it("removing the last symptom falls back to none", () => {
    let state = toggleSymptom(initialState(), "asthma");
    state = toggleSymptom(state, "asthma");
    expect(state.symptoms).toEqual(["none"]);
  });

  it("stores the response on success and clears it on failure", () => {
    const response = { aqi_class: "good" } as unknown as RecommendResponse;
    let state = submitSucceeded(selectImage(initialState(), fakeFile), response);
    expect(state.status).toBe("done");
    expect(state.response).toBe(response);
    state = submitFailed(state, { kind: "server", code: "x", message: "boom" });
    expect(state.status).toBe("error");
    expect(state.response).toBeNull();
    expect(state.error?.code).toBe("x");
  });
});
