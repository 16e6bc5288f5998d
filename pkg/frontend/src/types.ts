/** Wire schemas of the gateway; every body carries a `v` version field. */

export const SCHEMA_VERSION = 1;

/** Flag triple ordering used everywhere a (load, loss, power) state
 * classification appears: badges, threshold lines, lookup flags. */
export const FLAG_ORDER = ["load", "loss", "power"] as const;
export type FlagMetric = (typeof FLAG_ORDER)[number];

export interface KpiRecord {
  tti: number;
  thr_mbps: number;
  delay_ms: number;
  ee_bits_per_j: number;
  loss_pct: number;
  power_w: number;
}

export const KPI_KEYS = [
  "thr_mbps",
  "delay_ms",
  "ee_bits_per_j",
  "loss_pct",
  "power_w",
] as const;
export type KpiKey = (typeof KPI_KEYS)[number];

export interface ForecastValues {
  load: number;
  loss: number;
  power: number;
}

export interface MatchedRow {
  t_y: string;
  flags: number[];
  theta: number | string;
}

export interface VerdictPayload {
  valid: boolean;
  flags: number[];
  matched: MatchedRow[];
  reasons: string[];
}

export interface PolicyScoreJson {
  U: number;
  R: number;
  delta_ms: number;
  objective: number;
  covered: number;
  violated: string[];
}

export interface IntentReport {
  intent: string;
  t_y: string;
  verdict: VerdictPayload;
  chosen_apps: string[];
  placements: Record<string, Record<string, number>>;
  score: PolicyScoreJson | null;
  kpi_before: Record<string, number> | null;
  kpi_after: Record<string, number> | null;
  g_d: number | null;
}

export interface IntentResponse {
  v: number;
  dry_run: boolean;
  report: IntentReport;
}

export interface PendingVerdict {
  intent: string;
  dry_run: boolean;
  verdict: VerdictPayload;
}

export interface StreamFrame {
  v: number;
  tti: number;
  kpis: KpiRecord;
  forecast: ForecastValues | null;
  active_apps: string[];
  pending_verdicts: PendingVerdict[];
  dropped?: number;
}

export interface RunHandle {
  v: number;
  run_id: string;
  config_hash: string;
  seed: number;
  status: string;
  artifacts: Record<string, string>;
}

export interface RunState {
  v: number;
  handle: RunHandle;
  tti: number;
  active_apps: string[];
  frames: number;
  frames_dropped: number;
  reports: number;
}

export interface KpiWindowResponse {
  v: number;
  window: number;
  kpis: KpiRecord[];
}

export interface ForecastResponse {
  v: number;
  tti: number;
  values: ForecastValues;
}

export interface ThresholdSetJson {
  h_load: number;
  l_load: number;
  h_loss: number;
  l_loss: number;
  h_pc: number;
  l_pc: number;
}

export class SchemaError extends Error {}

export function checkVersion<T extends { v: number }>(body: T): T {
  if (body.v !== SCHEMA_VERSION) {
    throw new SchemaError(`unsupported schema version ${body.v}`);
  }
  return body;
}

/** Canonical serialization (sorted keys, no whitespace) so two values can
 * be compared byte for byte regardless of arrival order. */
export function stableStringify(value: unknown): string {
  if (value === null || typeof value !== "object") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return `[${value.map(stableStringify).join(",")}]`;
  }
  const entries = Object.entries(value as Record<string, unknown>)
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
    .map(([k, v]) => `${JSON.stringify(k)}:${stableStringify(v)}`);
  return `{${entries.join(",")}}`;
}
