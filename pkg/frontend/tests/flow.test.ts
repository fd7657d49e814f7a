import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient, ApiRequestError, NetworkError } from "../src/api";
import { DashboardApp } from "../src/app";
import { RecommendResponse } from "../src/types";

const RESPONSE: RecommendResponse = {
  pollutants: {
    pm25: 83.7219384,
    pm10: 140.25,
    so2: 13.04,
    o3: 32.5580001,
    no2: 19.9,
    co: 0.6612,
    aqi: 165.402,
  },
  units: { pm25: "ug/m3", pm10: "ug/m3", so2: "ug/m3", o3: "ug/m3", no2: "ug/m3", co: "mg/m3", aqi: "index" },
  aqi_class: "unhealthy",
  model: { architecture: "branched", checkpoint_sha256: "ab".repeat(32), input_size: [32, 32, 3] },
  latency_ms: 2.4,
  recommendation: {
    verdict: "unsuitable",
    advisory_key: "verdict.unsuitable",
    aqi_class: "unhealthy",
    triggered: [
      { symptom: "asthma", pollutant: "pm25", value: 83.7219384, threshold: 55.5, severity: "unsuitable" },
    ],
  },
  symptoms: ["asthma"],
};

type RecommendFn = (image: File | Blob, symptoms: string[]) => Promise<RecommendResponse>;

function mockApi(recommend: RecommendFn): ApiClient {
  return {
    recommend,
    modelInfo: async () => ({
      architecture: "branched",
      checkpoint_sha256: "ab".repeat(32),
      input_size: [32, 32, 3],
      symptom_vocabulary: ["asthma", "elderly", "none"],
    }),
  } as unknown as ApiClient;
}

const photo = new File(["pixels"], "scene.png", { type: "image/png" });

let root: HTMLElement;

beforeEach(() => {
  document.body.innerHTML = '<div id="app"></div>';
  root = document.getElementById("app")!;
});

describe("upload-and-predict flow", () => {
  it("disables submit until an image is chosen", async () => {
    const app = new DashboardApp(root, mockApi(async () => RESPONSE));
    await app.init();
    const button = root.querySelector("button[type=submit]") as HTMLButtonElement;
    expect(button.disabled).toBe(true);
    app.onImageChosen(photo);
    expect(button.disabled).toBe(false);
  });

  it("renders the seven pollutants, badge, and rule explanations on success", async () => {
    let sentSymptoms: string[] = [];
    const app = new DashboardApp(
      root,
      mockApi(async (_image, symptoms) => {
        sentSymptoms = symptoms;
        return RESPONSE;
      }),
    );
    await app.init();
    app.onImageChosen(photo);
    await app.submit();

    expect(sentSymptoms).toEqual(["none"]); // default profile
    const rows = root.querySelectorAll("table.pollutants tbody tr");
    expect(rows).toHaveLength(7);
    for (const [name, value] of Object.entries(RESPONSE.pollutants)) {
      const row = root.querySelector(`tr[data-pollutant="${name}"]`)!;
      expect(row.querySelector(".value")!.textContent).toBe(String(value));
    }
    const badge = root.querySelector(".aqi-badge") as HTMLElement;
    expect(badge.dataset.aqiClass).toBe("unhealthy");
    const banner = root.querySelector(".verdict") as HTMLElement;
    expect(banner.dataset.verdict).toBe("unsuitable");
    expect(banner.textContent).toContain("pm25");
    expect(banner.textContent).toContain(String(55.5));
  });

  it("sends the chosen symptoms as picked in the UI", async () => {
    let sentSymptoms: string[] = [];
    const app = new DashboardApp(
      root,
      mockApi(async (_image, symptoms) => {
        sentSymptoms = symptoms;
        return RESPONSE;
      }),
    );
    await app.init();
    app.onImageChosen(photo);

    const boxes = Array.from(root.querySelectorAll("input[type=checkbox]")) as HTMLInputElement[];
    const labels = boxes.map((b) => b.value);
    expect(labels).toEqual(["asthma", "elderly", "none"]); // server vocabulary
    boxes.find((b) => b.value === "asthma")!.dispatchEvent(new Event("change"));
    // controls re-render after each toggle
    const boxes2 = Array.from(root.querySelectorAll("input[type=checkbox]")) as HTMLInputElement[];
    boxes2.find((b) => b.value === "elderly")!.dispatchEvent(new Event("change"));

    await app.submit();
    expect(sentSymptoms).toEqual(["asthma", "elderly"]);
  });

  it("runs one request at a time: submit while loading is a no-op", async () => {
    let calls = 0;
    let release: (value: RecommendResponse) => void = () => {};
    const app = new DashboardApp(
      root,
      mockApi(() => {
        calls += 1;
        return new Promise<RecommendResponse>((resolve) => {
          release = resolve;
        });
      }),
    );
    await app.init();
    app.onImageChosen(photo);
    const first = app.submit();
    const second = app.submit(); // ignored: one in-flight request
    release(RESPONSE);
    await Promise.all([first, second]);
    expect(calls).toBe(1);
  });

  it("renders a 422 as an inline symptom field error with no banner", async () => {
    const app = new DashboardApp(
      root,
      mockApi(async () => {
        throw new ApiRequestError(422, "unknown_symptom", "unknown symptom 'typo'");
      }),
    );
    await app.init();
    app.onImageChosen(photo);
    await app.submit();

    const fieldError = root.querySelector(".field-error") as HTMLElement;
    expect(fieldError.hidden).toBe(false);
    expect(fieldError.textContent).toContain("typo");
    expect(root.querySelector(".error-box")).toBeNull();
    expect(root.querySelector(".verdict")).toBeNull();
  });

  it("renders distinct messages for 400, 413, 503, and network failures", async () => {
    const failures: Array<() => Error> = [
      () => new ApiRequestError(400, "undecodable_image", "cannot decode image"),
      () => new ApiRequestError(413, "image_too_large", "upload is too big"),
      () => new ApiRequestError(503, "no_checkpoint", "no model checkpoint is loaded"),
      () => new NetworkError("fetch failed"),
    ];
    const seen = new Set<string>();
    for (const failure of failures) {
      const app = new DashboardApp(
        root,
        mockApi(async () => {
          throw failure();
        }),
      );
      await app.init();
      app.onImageChosen(photo);
      await app.submit();
      const box = root.querySelector(".error-box") as HTMLElement;
      expect(box).not.toBeNull();
      seen.add(box.textContent ?? "");
    }
    expect(seen.size).toBe(failures.length);
  });

  it("a failed request is retryable: a later submit succeeds", async () => {
    let attempt = 0;
    const app = new DashboardApp(
      root,
      mockApi(async () => {
        attempt += 1;
        if (attempt === 1) throw new NetworkError("fetch failed");
        return RESPONSE;
      }),
    );
    await app.init();
    app.onImageChosen(photo);
    await app.submit();
    expect(root.querySelector(".error-box")).not.toBeNull();
    await app.submit();
    expect(root.querySelector(".error-box")).toBeNull();
    expect(root.querySelectorAll("table.pollutants tbody tr")).toHaveLength(7);
  });

  it("falls back to the bundled vocabulary when the model endpoint fails", async () => {
    const api = {
      recommend: async () => RESPONSE,
      modelInfo: async () => {
        throw new NetworkError("offline");
      },
    } as unknown as ApiClient;
    const app = new DashboardApp(root, api);
    await app.init();
    const labels = Array.from(root.querySelectorAll("input[type=checkbox]")).map(
      (b) => (b as HTMLInputElement).value,
    );
    expect(labels).toContain("asthma");
    expect(labels).toContain("none");
  });
});
