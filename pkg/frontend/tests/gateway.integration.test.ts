/**
 * Scripted session against a live gateway: create run, dry-run intent,
 * real intent, observe 100 stream frames, then verify that every rendered
 * value byte-matches the gateway's own REST snapshots.
 */
import { ChildProcess, spawn } from "node:child_process";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { chartValues } from "../src/charts.js";
import { GatewayClient } from "../src/client.js";
import { renderVerdictCard } from "../src/render.js";
import { SessionView } from "../src/session.js";
import { FrameStream } from "../src/stream.js";
import { stableStringify, StreamFrame } from "../src/types.js";

// the stream uses the runtime's own WebSocket (node: --experimental-websocket)
const hasWebSocket = typeof (globalThis as { WebSocket?: unknown })
  .WebSocket === "function";

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;
const DATASET = fileURLToPath(
  new URL("../../tests/fixtures/d_offline.jsonl", import.meta.url),
);

let server: ChildProcess;

async function waitForGateway(): Promise<void> {
  for (let i = 0; i < 120; i++) {
    try {
      const res = await fetch(`${BASE}/runs/nope/state`);
      if (res.status === 404) {
        return;
      }
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 500));
  }
  throw new Error("gateway did not come up");
}

beforeAll(async () => {
  server = spawn(
    "python3",
    ["-c", `from ranloop.gateway.service import serve; serve(port=${PORT})`],
    { stdio: "ignore" },
  );
  await waitForGateway();
});

afterAll(() => {
  server?.kill();
});

describe("scripted session against the live gateway", () => {
  it("renders values that byte-match the REST snapshots", async () => {
    expect(hasWebSocket, "run tests via `npm test` (needs WebSocket)").toBe(
      true,
    );
    const client = new GatewayClient(BASE);
    const handle = await client.createRun({ dataset: DATASET, seed: 0 });
    expect(handle.status).toBe("created");
    const view = new SessionView(handle.run_id);

    // dry-run first: a verdict card appears, nothing else changes
    const dry = await client.submitIntent(
      handle.run_id,
      "Increase throughput by 10%",
      true,
    );
    view.applyIntent(dry, (await client.state(handle.run_id)).tti);
    expect(dry.dry_run).toBe(true);
    expect(view.timeline).toEqual([]);
    expect(view.kpiBuffer).toEqual([]);

    // real intent; round trip must be interactive
    const started = Date.now();
    const real = await client.submitIntent(
      handle.run_id,
      "Increase throughput by 10%",
      false,
    );
    expect(Date.now() - started).toBeLessThan(2000);
    const afterIntent = await client.state(handle.run_id);
    view.applyIntent(real, afterIntent.tti);
    expect(real.report.verdict.valid).toBe(true);
    expect(view.timeline).toHaveLength(1);

    // observe 100 stream frames
    const frames: StreamFrame[] = [];
    await new Promise<void>((resolve, reject) => {
      const stream = new FrameStream(
        client,
        handle.run_id,
        (frame) => {
          frames.push(frame);
          view.applyFrame(frame);
          if (frames.length === 100) {
            stream.stop();
            resolve();
          }
        },
        {
          limit: 100,
          frameIntervalMs: 2,
          onEnd: () => reject(new Error("stream ended early")),
          onFallback: () => reject(new Error("websocket fallback hit")),
        },
      );
      stream.start();
    });
    expect(frames).toHaveLength(100);

    // chart buffer byte-matches GET /kpis (intent row + 100 frame rows)
    const snapshot = await client.kpis(handle.run_id, view.kpiBuffer.length);
    expect(view.kpiBuffer).toHaveLength(101);
    expect(stableStringify(chartValues(view.kpiBuffer))).toBe(
      stableStringify(snapshot.kpis),
    );

    // forecast overlay tail byte-matches GET /forecast
    const forecast = await client.forecast(handle.run_id);
    const lastOverlay = view.forecastOverlay[view.forecastOverlay.length - 1];
    expect(stableStringify(lastOverlay.values)).toBe(
      stableStringify(forecast.values),
    );

    // both verdict cards render from data that byte-matches the gateway's
    // pending-verdict feed (replayed in the first stream frame)
    const pending = frames[0].pending_verdicts;
    expect(pending).toHaveLength(2);
    expect(view.verdictFeed).toHaveLength(2);
    view.verdictFeed.forEach((card, i) => {
      expect(stableStringify(card.verdict)).toBe(
        stableStringify(pending[i].verdict),
      );
      expect(renderVerdictCard(card)).toContain(
        pending[i].verdict.valid ? "Valid" : "Invalid",
      );
    });
    expect(view.dryRunResults).toHaveLength(1);

    // only the real intent touched the app timeline
    expect(view.timeline).toHaveLength(1);
    expect(view.timeline[0].apps).toEqual(
      [...real.report.chosen_apps].sort(),
    );

    // reload reconstructs the same truth from REST alone
    const rebuilt = await client.kpis(handle.run_id, view.kpiBuffer.length);
    expect(stableStringify(rebuilt.kpis)).toBe(
      stableStringify(chartValues(view.kpiBuffer)),
    );
  });

  it("passes gateway rejections through to the form", async () => {
    const client = new GatewayClient(BASE);
    const handle = await client.createRun({ dataset: DATASET, seed: 1 });
    await expect(
      client.submitIntent(handle.run_id, "Increase happiness by 10%"),
    ).rejects.toThrow(/unsupported intent type/);
  });
});
