export type Monotonicity = "increasing" | "decreasing";

export interface FeatureSpec {
  name: string;
  monotonicity: Monotonicity;
  thresholds: number[];
  missing_codes: number[];
  not_missing_indicator: boolean;
}

export interface SubscaleDoc {
  name: string;
  features: number[];
  coefficients: Record<string, number>;
  bias: number;
}

export interface ScoringTableRow {
  interval: string;
  points: number;
}

export interface FeatureTable {
  feature: string;
  rows: ScoringTableRow[];
}

export interface SubscaleTables {
  subscale: string;
  tables: FeatureTable[];
}

export interface ModelDoc {
  schema_version: number;
  features: FeatureSpec[];
  subscales: SubscaleDoc[];
  second_layer: { weights: number[]; bias: number };
  scoring_tables: SubscaleTables[];
  model_hash: string;
}

export interface SubscaleScore {
  name: string;
  points: number;
  risk: number;
  weight: number;
  weighted_score: number;
}

export interface ImportantFactor {
  feature: string;
  subscale: string;
  contribution: number;
}

export interface PredictResponse {
  probability: number;
  subscales: SubscaleScore[];
  important_factors: ImportantFactor[];
  model_hash: string;
}

export interface RuleFeature {
  column: number;
  name: string;
}

export interface RuleDoc {
  features: RuleFeature[];
  label: number;
  support: number;
  sparsity: number;
  text: string;
}

export interface ExplainResponse {
  rule: RuleDoc;
  step: string;
  support_threshold: number;
  model_hash: string;
}

export interface CaseDoc {
  row_index: number;
  raw_values: Record<string, number>;
  model_label: number;
  shared_feature_count: number;
}

export interface CasesResponse {
  rule_text: string;
  cases: CaseDoc[];
  model_hash: string;
}

export interface FeatureValues {
  [name: string]: number | null;
}
