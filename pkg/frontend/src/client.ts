import {
  checkVersion,
  ForecastResponse,
  IntentResponse,
  KpiWindowResponse,
  RunHandle,
  RunState,
} from "./types.js";

/** Network-level failure: the gateway could not be reached at all.  The
 * UI shows a banner with a retry action for this case. */
export class GatewayUnreachableError extends Error {
  constructor(cause: unknown) {
    super(`gateway unreachable: ${String(cause)}`);
  }
}

/** Application-level rejection: the gateway answered with an error body.
 * The message is shown verbatim (e.g. "unsupported intent type ..."). */
export class GatewayError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly hint?: string,
  ) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class GatewayClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (...a) => fetch(...a),
  ) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, {
        method,
        headers: { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new GatewayUnreachableError(err);
    }
    const parsed = (await response.json()) as Record<string, unknown>;
    if (!response.ok || typeof parsed.error === "string") {
      throw new GatewayError(
        response.status,
        String(parsed.error ?? response.statusText),
        typeof parsed.hint === "string" ? parsed.hint : undefined,
      );
    }
    return parsed as T;
  }

  async createRun(config: Record<string, unknown> = {}): Promise<RunHandle> {
    return checkVersion(await this.request<RunHandle>("POST", "/runs", config));
  }

  async state(runId: string): Promise<RunState> {
    return checkVersion(await this.request<RunState>("GET", `/runs/${runId}/state`));
  }

  async submitIntent(
    runId: string,
    text: string,
    dryRun = false,
  ): Promise<IntentResponse> {
    return checkVersion(
      await this.request<IntentResponse>("POST", `/runs/${runId}/intents`, {
        text,
        dry_run: dryRun,
      }),
    );
  }

  async kpis(runId: string, window: number): Promise<KpiWindowResponse> {
    return checkVersion(
      await this.request<KpiWindowResponse>(
        "GET",
        `/runs/${runId}/kpis?window=${window}`,
      ),
    );
  }

  async forecast(runId: string): Promise<ForecastResponse> {
    return checkVersion(
      await this.request<ForecastResponse>("GET", `/runs/${runId}/forecast`),
    );
  }

  streamUrl(runId: string, limit = 0, intervalMs = 0): string {
    const ws = this.baseUrl.replace(/^http/, "ws");
    return `${ws}/runs/${runId}/stream?limit=${limit}&interval_ms=${intervalMs}`;
  }
}
