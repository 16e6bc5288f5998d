import { kpiSeries, renderSvgChart } from "./charts.js";
import { GatewayClient, GatewayUnreachableError } from "./client.js";
import { renderBanner, renderVerdictCard } from "./render.js";
import { SessionView } from "./session.js";
import { FrameStream } from "./stream.js";
import { KPI_KEYS } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

async function boot(): Promise<void> {
  const base = new URLSearchParams(location.search).get("gateway") ??
    `http://${location.hostname}:8420`;
  const client = new GatewayClient(base);
  const banner = el<HTMLDivElement>("banner");

  let view: SessionView;
  try {
    const handle = await client.createRun({});
    view = new SessionView(handle.run_id);
    el<HTMLSpanElement>("run-id").textContent = handle.run_id;
  } catch (err) {
    banner.textContent = renderBanner(String(err));
    return;
  }

  const redraw = () => {
    el<HTMLDivElement>("charts").innerHTML = KPI_KEYS.map((key) =>
      renderSvgChart(kpiSeries(view.kpiBuffer, key), {
        gapsAfter: view.gaps,
      }),
    ).join("");
    el<HTMLPreElement>("verdicts").textContent = view.verdictFeed
      .map(renderVerdictCard)
      .join("\n---\n");
    el<HTMLPreElement>("timeline").textContent = view.timeline
      .map((entry) => `tti ${entry.tti}: ${entry.apps.join(", ") || "(none)"}`)
      .join("\n");
  };

  const stream = new FrameStream(client, view.runId, (frame) => {
    view.applyFrame(frame);
    redraw();
  }, {
    onFallback: () => {
      banner.textContent = "live stream unavailable; polling every 2 s";
    },
  });
  stream.start();

  el<HTMLFormElement>("intent-form").addEventListener("submit", (event) => {
    event.preventDefault();
    const text = el<HTMLInputElement>("intent-text").value;
    const dryRun = el<HTMLInputElement>("dry-run").checked;
    void (async () => {
      try {
        const response = await client.submitIntent(view.runId, text, dryRun);
        const state = await client.state(view.runId);
        view.applyIntent(response, state.tti);
        banner.textContent = "";
      } catch (err) {
        banner.textContent =
          err instanceof GatewayUnreachableError
            ? renderBanner(err.message)
            : String(err); // e.g. inline "unsupported intent type ..."
      }
      redraw();
    })();
  });
}

void boot();
