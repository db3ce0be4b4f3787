/** Thin client over the documented JSON API; the only integration surface. */

import type {
  AnnotationPayload,
  DistanceClass,
  MetricsResponse,
  ReferenceClass,
  ReviewItem,
  SampleListResponse,
} from "./types.js";

export interface ListParams {
  limit?: number;
  offset?: number;
  reference?: ReferenceClass;
  distance?: DistanceClass;
  outliersOnly?: boolean;
  unannotatedOnly?: boolean;
}

export function buildSamplesUrl(base: string, params: ListParams = {}): string {
  const query = new URLSearchParams();
  if (params.limit !== undefined) query.set("limit", String(params.limit));
  if (params.offset !== undefined) query.set("offset", String(params.offset));
  if (params.reference) query.set("reference", params.reference);
  if (params.distance) query.set("distance", params.distance);
  if (params.outliersOnly) query.set("outliers_only", "true");
  if (params.unannotatedOnly) query.set("unannotated_only", "true");
  const suffix = query.toString();
  return `${base}/api/samples${suffix ? `?${suffix}` : ""}`;
}

export interface AnnotationBody {
  reference: ReferenceClass;
  distance: DistanceClass;
  annotator?: string;
  raw_object?: string;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(url: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(url, init);
    if (!response.ok) {
      throw new ApiError(response.status, `${init?.method ?? "GET"} ${url} -> ${response.status}`);
    }
    return (await response.json()) as T;
  }

  listSamples(params: ListParams = {}): Promise<SampleListResponse> {
    return this.request(buildSamplesUrl(this.base, params));
  }

  getSample(sampleId: string): Promise<ReviewItem> {
    return this.request(`${this.base}/api/samples/${encodeURIComponent(sampleId)}`);
  }

  async putAnnotation(sampleId: string, body: AnnotationBody): Promise<AnnotationPayload> {
    const result = await this.request<{ annotation: AnnotationPayload }>(
      `${this.base}/api/annotations/${encodeURIComponent(sampleId)}`,
      {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ annotator: "ui", ...body }),
      },
    );
    return result.annotation;
  }

  toggleFlag(sampleId: string): Promise<{ sample_id: string; flagged: boolean }> {
    return this.request(`${this.base}/api/flags/${encodeURIComponent(sampleId)}`, {
      method: "POST",
    });
  }

  getMetrics(): Promise<MetricsResponse> {
    return this.request(`${this.base}/api/metrics`);
  }
}
