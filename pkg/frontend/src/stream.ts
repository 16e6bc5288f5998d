import { GatewayClient } from "./client.js";
import { checkVersion, StreamFrame } from "./types.js";

export type FrameHandler = (frame: StreamFrame) => void;

/** Minimal surface shared by the browser WebSocket and the `ws` package. */
export interface WebSocketLike {
  onmessage: ((event: { data: unknown }) => void) | null;
  onerror: ((event: unknown) => void) | null;
  onclose: ((event: unknown) => void) | null;
  onopen: ((event: unknown) => void) | null;
  close(): void;
}

export type WsFactory = (url: string) => WebSocketLike;

export interface StreamOptions {
  wsFactory?: WsFactory;
  /** Cadence of the REST polling fallback. */
  pollIntervalMs?: number;
  limit?: number;
  /** Server-side pacing of websocket frames. */
  frameIntervalMs?: number;
  onFallback?: () => void;
  onEnd?: () => void;
  setIntervalFn?: typeof setInterval;
  clearIntervalFn?: typeof clearInterval;
}

const POLL_INTERVAL_MS = 2000;

function defaultFactory(url: string): WebSocketLike {
  const ctor = (globalThis as { WebSocket?: new (u: string) => WebSocketLike })
    .WebSocket;
  if (!ctor) {
    throw new Error("no WebSocket implementation available");
  }
  return new ctor(url);
}

/** Live frame source: WebSocket when available, otherwise REST polling at
 * a fixed 2 s cadence.  Either way every frame is handed to `onFrame`
 * exactly as received. */
export class FrameStream {
  mode: "idle" | "ws" | "poll" = "idle";

  private ws: WebSocketLike | null = null;
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private lastPolledTti: number | null = null;
  private opened = false;

  constructor(
    private readonly client: GatewayClient,
    private readonly runId: string,
    private readonly onFrame: FrameHandler,
    private readonly opts: StreamOptions = {},
  ) {}

  start(): void {
    const factory = this.opts.wsFactory ?? defaultFactory;
    try {
      this.ws = factory(
        this.client.streamUrl(this.runId, this.opts.limit ?? 0,
                              this.opts.frameIntervalMs ?? 0),
      );
    } catch {
      this.fallback();
      return;
    }
    this.mode = "ws";
    this.ws.onopen = () => {
      this.opened = true;
    };
    this.ws.onmessage = (event) => {
      this.opened = true;
      const frame = checkVersion(
        JSON.parse(String(event.data)) as StreamFrame,
      );
      this.onFrame(frame);
    };
    this.ws.onerror = () => {
      if (!this.opened) {
        this.fallback();
      }
    };
    this.ws.onclose = () => {
      if (!this.opened) {
        this.fallback();
      } else if (this.mode === "ws") {
        this.mode = "idle";
        this.opts.onEnd?.();
      }
    };
  }

  stop(): void {
    if (this.ws) {
      this.ws.onclose = null;
      this.ws.close();
      this.ws = null;
    }
    if (this.pollTimer !== null) {
      (this.opts.clearIntervalFn ?? clearInterval)(this.pollTimer);
      this.pollTimer = null;
    }
    this.mode = "idle";
  }

  private fallback(): void {
    if (this.mode === "poll") {
      return;
    }
    this.ws = null;
    this.mode = "poll";
    this.opts.onFallback?.();
    const schedule = this.opts.setIntervalFn ?? setInterval;
    this.pollTimer = schedule(
      () => void this.poll(),
      this.opts.pollIntervalMs ?? POLL_INTERVAL_MS,
    );
  }

  /** One polling round: synthesize a frame from REST snapshots whenever
   * the run clock advanced since the last round. */
  async poll(): Promise<void> {
    const state = await this.client.state(this.runId);
    if (this.lastPolledTti !== null && state.tti <= this.lastPolledTti) {
      return;
    }
    this.lastPolledTti = state.tti;
    const [window, forecast] = await Promise.all([
      this.client.kpis(this.runId, 1),
      this.client.forecast(this.runId),
    ]);
    if (window.kpis.length === 0) {
      return;
    }
    this.onFrame({
      v: state.v,
      tti: state.tti,
      kpis: window.kpis[window.kpis.length - 1],
      forecast: forecast.values,
      active_apps: state.active_apps,
      pending_verdicts: [],
      dropped: state.frames_dropped,
    });
  }
}
