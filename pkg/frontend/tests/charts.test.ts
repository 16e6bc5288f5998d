import { describe, expect, it } from "vitest";

import {
  chartValues,
  forecastSeries,
  gaugeFraction,
  kpiSeries,
  renderSvgChart,
  thresholdLines,
} from "../src/charts.js";
import { KpiRecord, stableStringify } from "../src/types.js";

function kpis(tti: number, thr: number): KpiRecord {
  return {
    tti,
    thr_mbps: thr,
    delay_ms: 2,
    ee_bits_per_j: 5e5,
    loss_pct: 1,
    power_w: 150,
  };
}

describe("chart data", () => {
  it("chart values are exactly the received records", () => {
    const buffer = [kpis(5, 100), kpis(10, 120)];
    expect(stableStringify(chartValues(buffer))).toBe(
      stableStringify(buffer),
    );
  });

  it("a constant feed renders a flat polyline matching the feed", () => {
    const buffer = [kpis(5, 100), kpis(10, 100), kpis(15, 100)];
    const series = kpiSeries(buffer, "thr_mbps");
    expect(series.points.map((p) => p.y)).toEqual([100, 100, 100]);
    const svg = renderSvgChart(series);
    const ys = [...svg.matchAll(/points="([^"]+)"/g)][0][1]
      .split(" ")
      .map((pair) => pair.split(",")[1]);
    expect(new Set(ys).size).toBe(1);
  });

  it("threshold lines come out in (load, loss, power) order", () => {
    const lines = thresholdLines({
      h_load: 40, l_load: 5, h_loss: 5, l_loss: 0.1, h_pc: 180, l_pc: 100,
    });
    expect(lines.map((l) => l.metric)).toEqual(["load", "loss", "power"]);
    expect(lines[0]).toEqual({ metric: "load", high: 40, low: 5 });
    expect(lines[2]).toEqual({ metric: "power", high: 180, low: 100 });
  });

  it("forecast overlay keeps the same metric ordering", () => {
    const series = forecastSeries([
      { tti: 5, values: { load: 10, loss: 1, power: 150 } },
    ]);
    expect(series.map((s) => s.label)).toEqual([
      "forecast_load",
      "forecast_loss",
      "forecast_power",
    ]);
  });

  it("gaps split the polyline instead of interpolating", () => {
    const buffer = [kpis(5, 100), kpis(10, 110), kpis(25, 90)];
    const svg = renderSvgChart(kpiSeries(buffer, "thr_mbps"), {
      gapsAfter: [10],
    });
    expect([...svg.matchAll(/<polyline/g)]).toHaveLength(2);
  });

  it("threshold rules are drawn as labelled lines", () => {
    const svg = renderSvgChart(kpiSeries([kpis(5, 100)], "thr_mbps"), {
      lines: [{ label: "high", y: 40 }, { label: "low", y: 5 }],
    });
    expect(svg).toContain('data-label="high"');
    expect(svg).toContain('data-label="low"');
  });

  it("gauge clamps to [0, 1] and maps null to zero", () => {
    expect(gaugeFraction(null)).toBe(0);
    expect(gaugeFraction(0)).toBe(0);
    expect(gaugeFraction(2.5)).toBe(0.5);
    expect(gaugeFraction(99)).toBe(1);
  });
});
