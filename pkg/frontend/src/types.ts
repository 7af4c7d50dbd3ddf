/** Wire types for the artifact service. Mirrors the JSON the endpoints emit. */

export interface HealthOut {
  status: string;
  snapshot_hash: string;
  classes: string[];
  vocab_size: number;
  n_train: number;
  study_role: string;
}

export interface PredictOut {
  label: number;
  class_name: string;
  probabilities: number[];
  tokens: string[];
  snapshot_hash: string;
}

export interface Saliency {
  instance_id: string;
  method: string;
  target_class: number;
  tokens: string[];
  scores: number[];
}

export interface FeatureOut {
  saliency: Saliency;
  top_tokens: string[];
  predicted: number;
  probabilities: number[];
  snapshot_hash: string;
}

export interface InstanceOut {
  test_id: string;
  method: string;
  variant: string;
  snapshot_hash: string;
  entries: [string, number][];
  n_train: number;
}

/** One test instance inside a heatmap payload. */
export interface HeatmapTest {
  id: string;
  tokens: string[];
  label: number | null;
  predicted: number;
  probabilities: number[];
  scores_raw: number[];
  scores_norm: number[];
}

/** One train instance block: influence plus per-token saliency for it. */
export interface HeatmapTrainBlock {
  train_id: string;
  rank: number;
  influence: number;
  label: number;
  tokens: string[];
  scores_raw: number[];
  scores_norm: number[];
}

export interface HeatmapPayload {
  schema_version: number;
  snapshot_hash: string;
  instance_method: string;
  feature_method: string;
  variant: string;
  k: number;
  steps: number;
  test: HeatmapTest;
  top: HeatmapTrainBlock[];
  bottom: HeatmapTrainBlock[];
}

export interface WhatifOut {
  pred_before: number;
  pred_after: number;
  probs_before: number[];
  probs_after: number[];
  delta_prob: number;
  flipped: boolean;
  saliency_after: Saliency;
  snapshot_hash: string;
}

export interface MaskOut {
  token: string;
  n_affected: number;
  flip_fraction: number;
  mean_delta: number;
  trials: number | null;
  on: string;
  snapshot_hash: string;
}

export interface TokenLabelStat {
  token: string;
  label: string;
  value: number;
  n_token: number;
  n_token_label: number;
}

export interface FrequencyTable {
  method: string;
  k: number;
  n_instances: number;
  exclusions: string[];
  entries: [string, number][];
}

export interface TfaTable {
  test_id: string;
  instance_method: string;
  feature_method: string;
  variant: string;
  k_pct: number;
  top_m: number;
  exclusions: string[];
  n_train: number;
  n_per_side: number;
  top_ids: string[];
  bottom_ids: string[];
  top_entries: [string, number][];
  bottom_entries: [string, number][];
}

export interface AggregateBody {
  study_role: string;
  n_study: number;
  feature: FrequencyTable;
  tfa: TfaTable;
  pmi: Record<string, TokenLabelStat[]>;
  competency: TokenLabelStat[];
}

export interface AggregateEnvelope {
  kind: string;
  snapshot_hash: string;
  dataset_hashes: Record<string, string>;
  params: Record<string, unknown>;
  body: AggregateBody;
}

/** One what-if probe the user ran, kept in the append-only history. */
export interface ProbeEntry {
  seq: number;
  original: string;
  edited: string;
  original_b: string | null;
  edited_b: string | null;
  pred_before: number;
  pred_after: number;
  delta_prob: number;
  flipped: boolean;
}

export interface PredictIn {
  text: string;
  text_b?: string | null;
}

export interface FeatureIn extends PredictIn {
  method?: "G" | "IG";
  k?: number;
  steps?: number;
  target_class?: number | null;
}

export interface InstanceIn extends PredictIn {
  method?: "IF" | "RIF" | "EUC";
  variant?: "theta" | "ell";
  top_k?: number;
}

export interface TfaIn extends PredictIn {
  instance_method?: "IF" | "RIF" | "EUC";
  feature_method?: "G" | "IG";
  variant?: "theta" | "ell";
  k?: number;
  steps?: number;
}

export interface WhatifIn {
  original: string;
  edited: string;
  original_b?: string | null;
  edited_b?: string | null;
}

export interface MaskIn {
  token?: string | null;
  random_trials?: number | null;
  seed?: number;
}
