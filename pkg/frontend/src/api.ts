import { ModelInfo, RecommendResponse } from "./types";

// Server-reported failure: carries the HTTP status plus the machine code
// and human message from the error envelope.
export class ApiRequestError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiRequestError";
  }
}

// Transport-level failure (server unreachable, connection dropped).
export class NetworkError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "NetworkError";
  }
}

async function toApiError(response: Response): Promise<ApiRequestError> {
  let code = "unknown_error";
  let message = `request failed with status ${response.status}`;
  try {
    const body = await response.json();
    if (body && body.error) {
      code = body.error.code ?? code;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the fallback message
  }
  return new ApiRequestError(response.status, code, message);
}

export class ApiClient {
  constructor(
    private base: string,
    private fetchFn: typeof fetch = fetch,
  ) {}

  // The original file bytes are uploaded untouched; any preview downscaling
  // stays strictly client-side.
  async recommend(image: File | Blob, symptoms: string[]): Promise<RecommendResponse> {
    const form = new FormData();
    form.append("image", image);
    form.append("symptoms", symptoms.length ? symptoms.join(",") : "none");
    let response: Response;
    try {
      response = await this.fetchFn(`${this.base}/api/recommend`, {
        method: "POST",
        body: form,
      });
    } catch (err) {
      throw new NetworkError(`cannot reach the prediction service: ${String(err)}`);
    }
    if (!response.ok) {
      throw await toApiError(response);
    }
    return (await response.json()) as RecommendResponse;
  }

  async modelInfo(): Promise<ModelInfo> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.base}/api/model`);
    } catch (err) {
      throw new NetworkError(`cannot reach the prediction service: ${String(err)}`);
    }
    if (!response.ok) {
      throw await toApiError(response);
    }
    return (await response.json()) as ModelInfo;
  }
}
