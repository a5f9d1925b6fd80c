/** Response shapes of the node HTTP API (snake_case mirrors the wire). */

export interface ParamEntry {
  key: string;
  type: "string" | "integer" | "decimal" | "bytes";
  value: string | number;
}

export interface TxView {
  tx_id: string;
  process_type: string;
  actor_id: string;
  actor_name?: string;
  role: string;
  input_lots: string[];
  output_lot: string | null;
  delivery_note: string | null;
  transport_ref: string | null;
  supersedes: string | null;
  sensor_series: string | null;
  parameters: ParamEntry[];
  created_at: number;
}

export interface ViolationView {
  start_ts: number;
  end_ts: number;
  duration: number;
  extreme_temp: string;
}

export interface ComplianceView {
  compliant: boolean;
  total_excursion_seconds: number;
  violations: ViolationView[];
}

export interface TreeNode {
  tx: TxView;
  tx_id: string;
  height: number;
  input_subtrees: { lot: string; node: TreeNode }[];
  external_inputs: string[];
  compliance?: ComplianceView;
}

export interface HistoryEvent {
  depth: number;
  lot: string | null;
  tx: TxView;
  height: number;
  external_inputs: string[];
  compliance?: ComplianceView;
}

export interface HistoryResponse {
  lot: string;
  tree: TreeNode;
  events: HistoryEvent[];
}

export interface SampleView {
  timestamp: number;
  temperature: string;
}

export interface PolicyView {
  min_temp: string;
  max_temp: string;
  max_excursion_seconds: number;
}

export interface TemperatureResponse {
  sensor_id: string;
  samples: SampleView[];
  tx_id: string;
  report?: ComplianceView;
  policy?: PolicyView;
}

export interface ActorView {
  actor_id: string;
  display_name: string;
  roles: string[];
}

export interface SubmitReceipt {
  tx_id: string;
  status: string;
}

export interface TerminateResponse extends SubmitReceipt {
  sensor_id: string;
  sensor_digest: string;
  samples: SampleView[];
  report?: ComplianceView;
}

export interface ApiFailure {
  status: number;
  error: string;
  message: string;
  line?: number;
}

export type ApiResult<T> = { ok: true; data: T } | ({ ok: false } & ApiFailure);
