import type {
  CasesResponse,
  ExplainResponse,
  FeatureValues,
  ModelDoc,
  PredictResponse,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string }
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

async function errorMessage(response: {
  status: number;
  json(): Promise<unknown>;
}): Promise<string> {
  try {
    const body = (await response.json()) as { error?: string; detail?: string };
    return body.error ?? body.detail ?? `request failed with status ${response.status}`;
  } catch {
    return `request failed with status ${response.status}`;
  }
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path);
    if (!response.ok) {
      throw new ApiError(response.status, await errorMessage(response));
    }
    return (await response.json()) as T;
  }

  private async post<T>(path: string, payload: unknown): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!response.ok) {
      throw new ApiError(response.status, await errorMessage(response));
    }
    return (await response.json()) as T;
  }

  getModel(): Promise<ModelDoc> {
    return this.get<ModelDoc>("/model");
  }

  predict(features: FeatureValues): Promise<PredictResponse> {
    return this.post<PredictResponse>("/predict", { features });
  }

  explain(features: FeatureValues): Promise<ExplainResponse> {
    return this.post<ExplainResponse>("/explain", { features });
  }

  cases(features: FeatureValues, k = 5): Promise<CasesResponse> {
    return this.post<CasesResponse>("/cases", { features, k });
  }
}
