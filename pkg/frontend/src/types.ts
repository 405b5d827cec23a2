/** Payload shapes of the annotation service API. */

export type Provenance = "auto" | "auto-weak" | "human";

export interface DocSummary {
  id: number;
  tokens: string[];
  targets: number;
  human: number;
  done: boolean;
}

export interface AnnotationRecord {
  bio: string[];
  provenance: Provenance;
  version: number;
  history: { at: string; bio: string[]; provenance: Provenance }[];
}

export interface TargetView {
  /** Inclusive token span of the target mention. */
  span: [number, number];
  polarity: "positive" | "neutral" | "negative";
  record: AnnotationRecord;
}

export interface DocDetail {
  id: number;
  tokens: string[];
  ptb: string;
  targets: TargetView[];
}

export interface Proposal {
  bio: string[];
  provenance: Provenance;
  scope_span: [number, number];
  opinion_spans: [number, number][];
}

export interface Stats {
  total: number;
  auto: number;
  auto_weak: number;
  human: number;
  adjustment_ratio: number;
}

/** Half-open token range of a highlighted scope. */
export interface Span {
  start: number;
  stop: number;
}
