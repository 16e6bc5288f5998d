import { describe, expect, it } from "vitest";

import {
  GatewayClient,
  GatewayError,
  GatewayUnreachableError,
} from "../src/client.js";

function fakeFetch(status: number, body: unknown) {
  return async () =>
    new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
}

describe("GatewayClient", () => {
  it("passes gateway error messages through verbatim", async () => {
    const client = new GatewayClient(
      "http://gw",
      fakeFetch(400, { v: 1, error: "unsupported intent type 'happiness'" }),
    );
    await expect(client.submitIntent("run-0001", "nonsense")).rejects.toThrow(
      "unsupported intent type 'happiness'",
    );
    await expect(
      client.submitIntent("run-0001", "nonsense"),
    ).rejects.toBeInstanceOf(GatewayError);
  });

  it("keeps the remediation hint from error bodies", async () => {
    const client = new GatewayClient(
      "http://gw",
      fakeFetch(409, { v: 1, error: "missing", hint: "train one first" }),
    );
    const err = await client.createRun({}).catch((e) => e as GatewayError);
    expect(err).toBeInstanceOf(GatewayError);
    expect((err as GatewayError).hint).toBe("train one first");
  });

  it("maps network failure to an unreachable error for the banner", async () => {
    const client = new GatewayClient("http://gw", async () => {
      throw new TypeError("fetch failed");
    });
    await expect(client.state("run-0001")).rejects.toBeInstanceOf(
      GatewayUnreachableError,
    );
  });

  it("rejects bodies with a foreign schema version", async () => {
    const client = new GatewayClient(
      "http://gw",
      fakeFetch(200, { v: 99, window: 1, kpis: [] }),
    );
    await expect(client.kpis("run-0001", 1)).rejects.toThrow(
      "unsupported schema version",
    );
  });

  it("builds websocket URLs from the HTTP base", () => {
    const client = new GatewayClient("http://127.0.0.1:8420");
    expect(client.streamUrl("run-0001", 100)).toBe(
      "ws://127.0.0.1:8420/runs/run-0001/stream?limit=100&interval_ms=0",
    );
  });
});
