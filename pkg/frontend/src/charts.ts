import { ForecastPoint } from "./session.js";
import {
  FLAG_ORDER,
  FlagMetric,
  KpiKey,
  KpiRecord,
  ThresholdSetJson,
} from "./types.js";

export interface ChartPoint {
  x: number;
  y: number;
}

export interface ChartSeries {
  label: string;
  points: ChartPoint[];
}

export interface ThresholdLine {
  metric: FlagMetric;
  high: number;
  low: number;
}

/** The values a KPI chart renders are exactly the records received; this
 * is the buffer the REST snapshot comparison runs against. */
export function chartValues(buffer: KpiRecord[]): KpiRecord[] {
  return [...buffer];
}

export function kpiSeries(buffer: KpiRecord[], key: KpiKey): ChartSeries {
  return {
    label: key,
    points: buffer.map((rec) => ({ x: rec.tti, y: rec[key] })),
  };
}

/** Forecast overlay series in the fixed (load, loss, power) ordering. */
export function forecastSeries(overlay: ForecastPoint[]): ChartSeries[] {
  return FLAG_ORDER.map((metric) => ({
    label: `forecast_${metric}`,
    points: overlay.map((p) => ({ x: p.tti, y: p.values[metric] })),
  }));
}

/** High/low threshold lines in the fixed (load, loss, power) ordering. */
export function thresholdLines(th: ThresholdSetJson): ThresholdLine[] {
  return [
    { metric: "load", high: th.h_load, low: th.l_load },
    { metric: "loss", high: th.h_loss, low: th.l_loss },
    { metric: "power", high: th.h_pc, low: th.l_pc },
  ];
}

/** Dimensionless goal-deviation gauge position in [0, 1]; full scale at
 * `fullScale` deviation. */
export function gaugeFraction(gd: number | null, fullScale = 5): number {
  if (gd === null || Number.isNaN(gd)) {
    return 0;
  }
  return Math.max(0, Math.min(1, gd / fullScale));
}

function scale(lo: number, hi: number, size: number): (v: number) => number {
  const span = hi - lo || 1;
  return (v) => ((v - lo) / span) * size;
}

/** Dependency-free SVG polyline chart.  Gaps (x positions listed in
 * `gapsAfter`) split the polyline; nothing is interpolated across them. */
export function renderSvgChart(
  series: ChartSeries,
  opts: {
    width?: number;
    height?: number;
    gapsAfter?: number[];
    lines?: { label: string; y: number }[];
  } = {},
): string {
  const width = opts.width ?? 600;
  const height = opts.height ?? 120;
  const gaps = new Set(opts.gapsAfter ?? []);
  const xs = series.points.map((p) => p.x);
  const ys = series.points
    .map((p) => p.y)
    .concat((opts.lines ?? []).map((l) => l.y));
  if (xs.length === 0) {
    return `<svg width="${width}" height="${height}"></svg>`;
  }
  const sx = scale(Math.min(...xs), Math.max(...xs), width);
  const sy = scale(Math.min(...ys), Math.max(...ys), height);
  const segments: string[][] = [[]];
  for (const point of series.points) {
    segments[segments.length - 1].push(
      `${sx(point.x)},${height - sy(point.y)}`,
    );
    if (gaps.has(point.x)) {
      segments.push([]);
    }
  }
  const polylines = segments
    .filter((seg) => seg.length > 0)
    .map((seg) => `<polyline fill="none" points="${seg.join(" ")}"/>`);
  const rules = (opts.lines ?? []).map(
    (line) =>
      `<line data-label="${line.label}" x1="0" x2="${width}" ` +
      `y1="${height - sy(line.y)}" y2="${height - sy(line.y)}"/>`,
  );
  return (
    `<svg width="${width}" height="${height}" data-series="${series.label}">` +
    polylines.join("") +
    rules.join("") +
    `</svg>`
  );
}
