/** View model for the process tree: derived 1:1 from the history response,
 * one row per event, nothing invented client-side. */

import type { HistoryResponse } from "./types.js";

export interface TreeRow {
  depth: number;
  txId: string;
  kind: string;
  icon: string;
  actor: string;
  lot: string;
  timestamp: number;
  /** compliance badge for transport legs carrying a sensor payload */
  badge: "ok" | "violated" | null;
  excursionSeconds: number | null;
  externalInputs: string[];
}

const ICONS: Record<string, string> = {
  inbound_receipt: "\u{1F4E6}",      // package
  production: "\u{1F3ED}",           // factory
  transport_start: "\u{1F69A}",      // truck
  transport_end: "\u{1F9CA}",        // ice
  outbound_delivery: "\u{1F4E4}",    // outbox
};

export function buildTreeRows(history: HistoryResponse): TreeRow[] {
  return history.events.map((event) => {
    const tx = event.tx;
    const lot = tx.output_lot ?? event.lot ?? tx.input_lots.join(", ");
    let badge: TreeRow["badge"] = null;
    let excursion: number | null = null;
    if (event.compliance) {
      badge = event.compliance.compliant ? "ok" : "violated";
      excursion = event.compliance.total_excursion_seconds;
    }
    return {
      depth: event.depth,
      txId: tx.tx_id,
      kind: tx.process_type,
      icon: ICONS[tx.process_type] ?? "•",
      actor: tx.actor_name || tx.actor_id,
      lot,
      timestamp: tx.created_at,
      badge,
      excursionSeconds: excursion,
      externalInputs: event.external_inputs,
    };
  });
}

export function nodeCount(history: HistoryResponse): number {
  return history.events.length;
}

/** Transport legs that can be opened in the temperature view. */
export function transportLegs(history: HistoryResponse): TreeRow[] {
  return buildTreeRows(history).filter((r) => r.kind === "transport_end");
}
