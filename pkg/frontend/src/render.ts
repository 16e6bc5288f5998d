import { VerdictCard } from "./session.js";
import { FLAG_ORDER } from "./types.js";

/** Text rendering of a verdict card; numbers appear exactly as received. */
export function renderVerdictCard(card: VerdictCard): string {
  const lines = [
    `${card.verdict.valid ? "Valid" : "Invalid"}: ${card.intent}` +
      (card.dryRun ? " [dry run]" : ""),
    `flags (${FLAG_ORDER.join(", ")}): ${card.verdict.flags.join("")}`,
  ];
  for (const row of card.verdict.matched) {
    lines.push(`matched ${row.t_y} @ ${row.flags.join("")} -> ${row.theta}`);
  }
  for (const reason of card.verdict.reasons) {
    lines.push(`reason: ${reason}`);
  }
  if (card.goalDeviation !== null) {
    lines.push(`goal deviation: ${card.goalDeviation}`);
  }
  return lines.join("\n");
}

export function renderBanner(message: string): string {
  return `⚠ ${message} — retry`;
}
