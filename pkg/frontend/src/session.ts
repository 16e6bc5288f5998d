import {
  ForecastValues,
  IntentResponse,
  KpiKey,
  KpiRecord,
  KPI_KEYS,
  PendingVerdict,
  stableStringify,
  StreamFrame,
  VerdictPayload,
} from "./types.js";

export interface VerdictCard {
  intent: string;
  dryRun: boolean;
  verdict: VerdictPayload;
  goalDeviation: number | null;
}

export interface TimelineEntry {
  tti: number;
  apps: string[];
}

export interface ForecastPoint {
  tti: number;
  values: ForecastValues;
}

export interface Badge {
  min: number;
  max: number;
  mean: number;
}

/** Client-side mirror of one run.  Every number it holds arrived verbatim
 * in a stream frame or REST body; the only computation done here is the
 * display aggregation of the min/max/mean badges. */
export class SessionView {
  readonly kpiBuffer: KpiRecord[] = [];
  readonly verdictFeed: VerdictCard[] = [];
  readonly timeline: TimelineEntry[] = [];
  readonly forecastOverlay: ForecastPoint[] = [];
  /** TTIs after which at least one frame went missing (rendered as a gap
   * marker in the charts; values are never interpolated). */
  readonly gaps: number[] = [];
  framesDropped = 0;

  private lastTti: number | null = null;
  private activeApps: string[] = [];

  constructor(
    readonly runId: string,
    private readonly intervalTtis = 5,
    private readonly bufferSize = 1024,
  ) {}

  get dryRunResults(): VerdictCard[] {
    return this.verdictFeed.filter((card) => card.dryRun);
  }

  get currentApps(): string[] {
    return [...this.activeApps];
  }

  applyFrame(frame: StreamFrame): void {
    if (this.lastTti !== null && frame.tti - this.lastTti > this.intervalTtis) {
      this.gaps.push(this.lastTti);
    }
    this.lastTti = frame.tti;
    if (typeof frame.dropped === "number") {
      this.framesDropped = frame.dropped;
    }
    this.pushKpis(frame.kpis);
    if (frame.forecast !== null) {
      this.forecastOverlay.push({ tti: frame.tti, values: frame.forecast });
    }
    for (const pending of frame.pending_verdicts) {
      this.pushPending(pending);
    }
    this.updateTimeline(frame.tti, frame.active_apps);
  }

  /** Record an intent outcome.  `tti` is the run clock reported by the
   * gateway after the submission (GET /state), so the KPI entry matches
   * the gateway's own log entry exactly. */
  applyIntent(response: IntentResponse, tti: number): void {
    this.verdictFeed.push({
      intent: response.report.intent,
      dryRun: response.dry_run,
      verdict: response.report.verdict,
      goalDeviation: response.report.g_d,
    });
    if (response.dry_run) {
      return; // dry runs change nothing beyond the verdict feed
    }
    if (response.report.kpi_after !== null) {
      this.pushKpis({ tti, ...response.report.kpi_after } as KpiRecord);
      this.lastTti = tti;
    }
    if (response.report.chosen_apps.length > 0) {
      this.updateTimeline(tti, [...response.report.chosen_apps].sort());
    }
  }

  /** Display aggregation only: min/max/mean badge per KPI. */
  badges(): Record<KpiKey, Badge> {
    const out = {} as Record<KpiKey, Badge>;
    for (const key of KPI_KEYS) {
      const values = this.kpiBuffer.map((rec) => rec[key]);
      if (values.length === 0) {
        out[key] = { min: NaN, max: NaN, mean: NaN };
        continue;
      }
      out[key] = {
        min: Math.min(...values),
        max: Math.max(...values),
        mean: values.reduce((a, b) => a + b, 0) / values.length,
      };
    }
    return out;
  }

  private pushKpis(kpis: KpiRecord): void {
    this.kpiBuffer.push(kpis);
    if (this.kpiBuffer.length > this.bufferSize) {
      this.kpiBuffer.shift();
    }
  }

  private pushPending(pending: PendingVerdict): void {
    const duplicate = this.verdictFeed.some(
      (card) =>
        card.intent === pending.intent &&
        card.dryRun === pending.dry_run &&
        stableStringify(card.verdict) === stableStringify(pending.verdict),
    );
    if (!duplicate) {
      this.verdictFeed.push({
        intent: pending.intent,
        dryRun: pending.dry_run,
        verdict: pending.verdict,
        goalDeviation: null,
      });
    }
  }

  private updateTimeline(tti: number, apps: string[]): void {
    const same =
      apps.length === this.activeApps.length &&
      apps.every((a, i) => a === this.activeApps[i]);
    if (!same) {
      this.activeApps = [...apps];
      this.timeline.push({ tti, apps: [...apps] });
    }
  }
}
