export interface StatusResponse {
  status: "idle" | "running" | "awaiting_human" | "paused" | "done" | "error";
  run_id: string | null;
  iterations: number;
  labels: string[];
  evidence_count: number;
  error: string | null;
}

export interface HistoryRow {
  iteration: number;
  evidence_count: number;
  inner_iterations: number;
  sst_added: number;
  fal_issued: number;
  fal_accepted: number;
  delta_fraction: number | null;
  loss: number | null;
  accuracy: number | null;
}

export interface ExampleSnippet {
  instance_id: number;
  text: string;
  feature: string[];
}

export interface PendingQuery {
  query_id: number;
  predicate: string[];
  labels: string[];
  entropy: number;
  avg_posterior: number[];
  examples: ExampleSnippet[];
}

export interface EvidenceRecord {
  kind: string;
  weight: number;
  learnable: boolean;
  source: string;
  status: string;
  token?: string;
  predicate?: string[];
  instance?: number;
  pair?: number[];
  label?: string;
}

export type Decision =
  | { query_id: number; action: "accept"; label: string }
  | { query_id: number; action: "reject" };
