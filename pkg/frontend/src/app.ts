import { ApiClient, ApiRequestError, NetworkError } from "./api";
import {
  UiState,
  canSubmit,
  initialState,
  selectImage,
  submitFailed,
  submitStarted,
  submitSucceeded,
  toggleSymptom,
} from "./state";
import { DEFAULT_SYMPTOMS } from "./types";
import {
  renderAqiBadge,
  renderError,
  renderPollutantTable,
  renderSymptomField,
  renderVerdictBanner,
} from "./view";

export class DashboardApp {
  state: UiState = initialState();
  vocabulary: string[] = DEFAULT_SYMPTOMS;
  private doc: Document;
  private fileInput!: HTMLInputElement;
  private submitButton!: HTMLButtonElement;
  private preview!: HTMLImageElement;
  private symptomsMount!: HTMLElement;
  private symptomError!: HTMLElement;
  private results!: HTMLElement;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
  ) {
    this.doc = root.ownerDocument;
  }

  async init(): Promise<void> {
    this.buildSkeleton();
    try {
      const info = await this.api.modelInfo();
      if (info.symptom_vocabulary?.length) {
        this.vocabulary = info.symptom_vocabulary;
      }
    } catch {
      // offline or degraded service: fall back to the bundled vocabulary
    }
    this.renderControls();
  }

  private buildSkeleton(): void {
    this.root.innerHTML = "";
    const doc = this.doc;

    const title = doc.createElement("h1");
    title.textContent = "HealthCam air quality check";
    this.root.appendChild(title);

    const form = doc.createElement("form");
    form.className = "capture-form";
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submit();
    });

    this.fileInput = doc.createElement("input");
    this.fileInput.type = "file";
    this.fileInput.accept = "image/png,image/jpeg";
    this.fileInput.addEventListener("change", () => {
      const file = this.fileInput.files?.[0];
      if (file) this.onImageChosen(file);
    });
    form.appendChild(this.fileInput);

    this.preview = doc.createElement("img");
    this.preview.className = "preview"; // downscaled by CSS only; upload keeps original bytes
    this.preview.alt = "preview of the chosen photo";
    this.preview.hidden = true;
    form.appendChild(this.preview);

    this.symptomsMount = doc.createElement("div");
    form.appendChild(this.symptomsMount);

    this.symptomError = doc.createElement("div");
    this.symptomError.className = "field-error";
    this.symptomError.hidden = true;
    form.appendChild(this.symptomError);

    this.submitButton = doc.createElement("button");
    this.submitButton.type = "submit";
    this.submitButton.textContent = "Check this location";
    this.submitButton.disabled = true;
    form.appendChild(this.submitButton);

    this.root.appendChild(form);

    this.results = doc.createElement("section");
    this.results.className = "results";
    this.root.appendChild(this.results);
  }

  private renderControls(): void {
    this.symptomsMount.innerHTML = "";
    this.symptomsMount.appendChild(
      renderSymptomField(this.doc, this.vocabulary, this.state.symptoms, (symptom) => {
        this.state = toggleSymptom(this.state, symptom);
        this.renderControls();
      }),
    );
    this.submitButton.disabled = !canSubmit(this.state);
  }

  onImageChosen(file: File): void {
    this.state = selectImage(this.state, file);
    if (typeof URL !== "undefined" && "createObjectURL" in URL) {
      try {
        this.preview.src = URL.createObjectURL(file);
        this.preview.hidden = false;
      } catch {
        this.preview.hidden = true;
      }
    }
    this.renderControls();
  }

  async submit(): Promise<void> {
    const image = this.state.image;
    if (!canSubmit(this.state) || image === null) {
      return; // one request in flight at a time
    }
    this.state = submitStarted(this.state);
    this.renderControls();
    this.renderResults();
    try {
      const response = await this.api.recommend(image, this.state.symptoms);
      this.state = submitSucceeded(this.state, response);
    } catch (err) {
      if (err instanceof ApiRequestError) {
        const kind = err.status === 422 ? "symptom" : "server";
        this.state = submitFailed(this.state, {
          kind,
          code: err.code,
          message: err.message,
        });
      } else if (err instanceof NetworkError) {
        this.state = submitFailed(this.state, {
          kind: "network",
          code: "network_error",
          message: err.message,
        });
      } else {
        throw err;
      }
    }
    this.renderControls();
    this.renderResults();
  }

  renderResults(): void {
    const doc = this.doc;
    this.results.innerHTML = "";
    this.symptomError.hidden = true;
    this.symptomError.textContent = "";

    if (this.state.status === "loading") {
      const note = doc.createElement("p");
      note.className = "loading";
      note.textContent = "Analyzing photo…";
      this.results.appendChild(note);
      return;
    }
    if (this.state.status === "error" && this.state.error) {
      if (this.state.error.kind === "symptom") {
        // 422: inline field error next to the symptom picker, no banner
        this.symptomError.textContent = `Please fix the symptom selection: ${this.state.error.message}`;
        this.symptomError.hidden = false;
      } else {
        this.results.appendChild(renderError(doc, this.state.error));
      }
      return;
    }
    if (this.state.status === "done" && this.state.response) {
      const response = this.state.response;
      const header = doc.createElement("div");
      header.className = "aqi-line";
      header.appendChild(doc.createTextNode("Air quality class: "));
      header.appendChild(renderAqiBadge(doc, response.aqi_class));
      this.results.appendChild(header);
      this.results.appendChild(renderVerdictBanner(doc, response.recommendation));
      this.results.appendChild(renderPollutantTable(doc, response));
    }
  }
}
