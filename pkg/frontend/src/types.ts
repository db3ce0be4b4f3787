/** Shapes mirrored from the review server's JSON API; never computed here. */

export type ReferenceClass =
  | "hand"
  | "coin_or_bottle_cap"
  | "ruler"
  | "small_household_object"
  | "fruit"
  | "unspecified_or_other";

export type DistanceClass = "close_up" | "distant";

export const REFERENCE_CLASSES: ReferenceClass[] = [
  "hand",
  "coin_or_bottle_cap",
  "ruler",
  "small_household_object",
  "fruit",
  "unspecified_or_other",
];

export interface AnnotationPayload {
  sample_id: string;
  reference: ReferenceClass;
  distance: DistanceClass;
  annotator: string;
  updated_at: string;
  raw_object?: string;
}

export interface MeasurementView {
  model_id: string;
  strategy: string;
  pred_cm: number | null;
  error_cm: number | null;
  miss: boolean;
  miss_reason: string;
  step1_class: string | null;
  degraded_step1: boolean;
}

export interface ReviewItem {
  sample_id: string;
  event_id: string;
  truth_cm: number;
  image_url: string;
  annotation: AnnotationPayload | null;
  measurements: MeasurementView[];
  outlier: boolean;
  flagged: boolean;
}

export interface SampleListResponse {
  total: number;
  offset: number;
  items: ReviewItem[];
  outlier_threshold_cm: number;
}

export interface MetricSummaryView {
  model_id: string;
  strategy: string;
  stratum: string;
  n: number;
  mae_cm: number;
  rmse_cm: number;
  bias_cm: number;
  pearson_r: number | null;
  miss_count: number;
  excluded_count: number;
  small_sample: boolean;
}

export interface MetricsResponse {
  run_id: string;
  policy: string;
  summaries: MetricSummaryView[];
  annotation_counts: Record<string, number>;
  unannotated: number;
  n_samples: number;
  flagged: string[];
}
