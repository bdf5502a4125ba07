// Typed client for the classification service. Every network call the
// app makes goes through this module, against one configured origin.

export const LABELS = ["trash", "recycle", "compost"] as const;
export type Label = (typeof LABELS)[number];

export const MAX_UPLOAD_BYTES = 10 * 1024 * 1024;
const IMAGE_TYPES = ["image/png", "image/jpeg"];

export interface PredictionEntry {
  label: Label;
  confidence: number;
}

export interface ClassifyResponse {
  predictions: PredictionEntry[];
  model_id: string;
  latency_ms: number;
  note: string | null;
}

export interface ContributeResponse {
  id: string;
  created: boolean;
}

export interface StatsResponse {
  counts: Record<Label, number>;
  by_split: Record<string, number>;
  total: number;
}

export class ServiceError extends Error {
  constructor(
    public status: number,
    detail: string,
  ) {
    super(detail);
  }
}

/** Client-side screen before any bytes leave the browser. */
export function validateUpload(file: File): string | null {
  if (!IMAGE_TYPES.includes(file.type)) {
    return `unsupported file type ${file.type || "(unknown)"}; use PNG or JPEG`;
  }
  if (file.size > MAX_UPLOAD_BYTES) {
    const mib = (file.size / (1024 * 1024)).toFixed(1);
    return `file is ${mib} MiB; the limit is 10 MiB`;
  }
  return null;
}

type FetchLike = typeof fetch;

export class DeepwasteApi {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    const body = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      const detail =
        typeof body.detail === "string" ? body.detail : `service error ${resp.status}`;
      throw new ServiceError(resp.status, detail);
    }
    return body as T;
  }

  classify(image: Blob, filename = "capture.png"): Promise<ClassifyResponse> {
    const form = new FormData();
    form.append("image", image, filename);
    return this.request("/v1/classify", { method: "POST", body: form });
  }

  contribute(image: Blob, label: Label, metadata: string): Promise<ContributeResponse> {
    const form = new FormData();
    form.append("image", image, "contribution.png");
    form.append("label", label);
    form.append("metadata", metadata);
    return this.request("/v1/items", { method: "POST", body: form });
  }

  stats(): Promise<StatsResponse> {
    return this.request("/v1/stats");
  }

  modelInfo(): Promise<{ model_id: string; labels: string[] }> {
    return this.request("/v1/model");
  }
}
