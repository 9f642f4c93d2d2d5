import { ApiClient, ApiError } from "./api.js";
import type {
  CasesResponse,
  ExplainResponse,
  FeatureValues,
  ModelDoc,
  PredictResponse,
} from "./types.js";

export interface WhatIfSnapshot {
  features: FeatureValues;
  prediction: PredictResponse | null;
  explanation: ExplainResponse | null;
  cases: CasesResponse | null;
  error: string | null;
  pending: boolean;
}

export type Listener = (snapshot: WhatIfSnapshot) => void;

/**
 * State container for the what-if screen. All model math comes from the
 * service; this class only tracks inputs, in-flight requests, and the latest
 * responses. Request sequence numbers make sure a slow earlier response can
 * never overwrite a newer one.
 */
export class WhatIfViewModel {
  readonly model: ModelDoc;
  private readonly api: ApiClient;
  private readonly debounceMs: number;
  private readonly listeners: Listener[] = [];
  private readonly features: FeatureValues = {};
  private predictSeq = 0;
  private explainSeq = 0;
  private debounceTimer: ReturnType<typeof setTimeout> | null = null;
  private snapshot: WhatIfSnapshot;

  constructor(model: ModelDoc, api: ApiClient, debounceMs = 250) {
    this.model = model;
    this.api = api;
    this.debounceMs = debounceMs;
    for (const spec of model.features) {
      this.features[spec.name] = null;
    }
    this.snapshot = {
      features: { ...this.features },
      prediction: null,
      explanation: null,
      cases: null,
      error: null,
      pending: false,
    };
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  current(): WhatIfSnapshot {
    return this.snapshot;
  }

  private publish(update: Partial<WhatIfSnapshot>): void {
    this.snapshot = {
      ...this.snapshot,
      ...update,
      features: { ...this.features },
    };
    for (const listener of this.listeners) {
      listener(this.snapshot);
    }
  }

  setFeature(name: string, value: number | null): void {
    if (!(name in this.features)) {
      throw new Error(`unknown feature: ${name}`);
    }
    this.features[name] = value;
    // Edits invalidate the pull-based panels until the user asks again.
    this.publish({ explanation: null, cases: null, pending: true });
    this.schedulePredict();
  }

  setMissing(name: string): void {
    this.setFeature(name, null);
  }

  setAll(values: FeatureValues): void {
    for (const [name, value] of Object.entries(values)) {
      if (name in this.features) {
        this.features[name] = value;
      }
    }
    this.publish({ explanation: null, cases: null, pending: true });
    this.schedulePredict();
  }

  private schedulePredict(): void {
    if (this.debounceTimer !== null) {
      clearTimeout(this.debounceTimer);
    }
    this.debounceTimer = setTimeout(() => {
      this.debounceTimer = null;
      void this.refreshPrediction();
    }, this.debounceMs);
  }

  async refreshPrediction(): Promise<void> {
    const seq = ++this.predictSeq;
    try {
      const prediction = await this.api.predict({ ...this.features });
      if (seq !== this.predictSeq) {
        return;
      }
      this.publish({ prediction, error: null, pending: false });
    } catch (err) {
      if (seq !== this.predictSeq) {
        return;
      }
      this.publish({
        prediction: null,
        error: err instanceof Error ? err.message : String(err),
        pending: false,
      });
    }
  }

  /** Explanations are expensive, so they are fetched only on demand. */
  async requestExplanation(): Promise<void> {
    const seq = ++this.explainSeq;
    const payload = { ...this.features };
    try {
      const explanation = await this.api.explain(payload);
      const cases = await this.api.cases(payload);
      if (seq !== this.explainSeq) {
        return;
      }
      this.publish({ explanation, cases, error: null });
    } catch (err) {
      if (seq !== this.explainSeq) {
        return;
      }
      const message =
        err instanceof ApiError
          ? err.message
          : err instanceof Error
            ? err.message
            : String(err);
      this.publish({ explanation: null, cases: null, error: message });
    }
  }
}
