/** HTML renderers and access rules.  Renderers return strings so they can
 * be tested without a browser; the app shell binds them to the DOM. */

import type { TreeRow } from "./tree.js";
import type { ComplianceView } from "./types.js";

export const READ_VIEWS = ["trace", "temperature", "blocks"] as const;
export const WRITE_VIEWS = ["production", "terminate"] as const;

export function canRegisterProduction(roles: string[]): boolean {
  return roles.includes("producer");
}

export function canTerminateTransport(roles: string[]): boolean {
  return roles.includes("transporter");
}

/** Anonymous sessions (no roles) reach every read view and no write view. */
export function accessibleViews(roles: string[]): string[] {
  const views: string[] = [...READ_VIEWS];
  if (canRegisterProduction(roles)) views.push("production");
  if (canTerminateTransport(roles)) views.push("terminate");
  return views;
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function formatTs(ts: number): string {
  return new Date(ts * 1000).toISOString().replace("T", " ").slice(0, 19);
}

export function badgeHtml(badge: TreeRow["badge"], excursionSeconds: number | null): string {
  if (badge === null) return "";
  if (badge === "ok") {
    return '<span class="badge badge-ok">cold chain ok</span>';
  }
  const detail = excursionSeconds !== null ? ` (${excursionSeconds}s excursion)` : "";
  return `<span class="badge badge-violated">cold chain VIOLATED${escapeHtml(detail)}</span>`;
}

export function renderTreeHtml(rows: TreeRow[]): string {
  const parts: string[] = ['<ol class="process-tree">'];
  for (const row of rows) {
    parts.push(
      `<li class="tree-row kind-${escapeHtml(row.kind)}" data-depth="${row.depth}" ` +
      `data-tx="${escapeHtml(row.txId)}" style="margin-left:${row.depth * 1.5}rem">` +
      `<span class="icon">${row.icon}</span> ` +
      `<span class="kind">${escapeHtml(row.kind.replace("_", " "))}</span> ` +
      `<span class="lot">${escapeHtml(row.lot)}</span> ` +
      `<span class="actor">${escapeHtml(row.actor)}</span> ` +
      `<span class="ts">${formatTs(row.timestamp)}</span>` +
      badgeHtml(row.badge, row.excursionSeconds),
    );
    for (const ext of row.externalInputs) {
      parts.push(
        `<div class="external-input" style="margin-left:1.5rem">` +
        `⤴ external input <span class="lot">${escapeHtml(ext)}</span> ` +
        `(origin outside this chain)</div>`,
      );
    }
    parts.push("</li>");
  }
  parts.push("</ol>");
  return parts.join("");
}

export function renderNotFound(lot: string): string {
  return (
    `<div class="banner banner-error">No on-chain history for ` +
    `<strong>${escapeHtml(lot)}</strong>. Check the code or the chain hint.</div>`
  );
}

export function renderRoleNotice(viewName: string, requiredRole: string): string {
  return (
    `<div class="banner banner-notice">The ${escapeHtml(viewName)} form needs the ` +
    `<strong>${escapeHtml(requiredRole)}</strong> role. Your session key does not ` +
    `hold it, so the form is disabled.</div>`
  );
}

export function renderProductionForm(roles: string[]): string {
  const allowed = canRegisterProduction(roles);
  const disabled = allowed ? "" : " disabled";
  const notice = allowed ? "" : renderRoleNotice("production", "producer");
  return (
    notice +
    `<form id="production-form" class="${allowed ? "" : "form-disabled"}">` +
    `<label>Input lots (comma separated)` +
    `<input name="input_lots" placeholder="RAW-1, RAW-2"${disabled}></label>` +
    `<label>Output lot<input name="output_lot" placeholder="PROD-1"${disabled}></label>` +
    `<label>Parameters (key=value per line)<textarea name="parameters"${disabled}></textarea></label>` +
    `<button type="submit"${disabled}>Register production</button>` +
    `</form>`
  );
}

export function renderTerminateForm(roles: string[]): string {
  const allowed = canTerminateTransport(roles);
  const disabled = allowed ? "" : " disabled";
  const notice = allowed ? "" : renderRoleNotice("transport termination", "transporter");
  return (
    notice +
    `<form id="terminate-form" class="${allowed ? "" : "form-disabled"}">` +
    `<label>Transport start tx id<input name="transport_id"${disabled}></label>` +
    `<label>Sensor dump (CSV)<input type="file" name="dump"${disabled}></label>` +
    `<button type="submit"${disabled}>Terminate transport</button>` +
    `</form>`
  );
}

export function renderComplianceSummary(report: ComplianceView): string {
  const cls = report.compliant ? "badge-ok" : "badge-violated";
  const verdict = report.compliant ? "COMPLIANT" : "NON-COMPLIANT";
  const rows = report.violations
    .map(
      (v) =>
        `<li>${formatTs(v.start_ts)} → ${formatTs(v.end_ts)}: ` +
        `${v.duration}s, extreme ${escapeHtml(v.extreme_temp)}°C</li>`,
    )
    .join("");
  return (
    `<div class="compliance"><span class="badge ${cls}">${verdict}</span> ` +
    `total excursion ${report.total_excursion_seconds}s` +
    (rows ? `<ul class="violations">${rows}</ul>` : "") +
    `</div>`
  );
}

export function renderError(error: string, message: string, line?: number): string {
  const lineInfo = line !== undefined ? ` (line ${line})` : "";
  return (
    `<div class="banner banner-error"><code>${escapeHtml(error)}</code>: ` +
    `${escapeHtml(message)}${escapeHtml(lineInfo)}</div>`
  );
}
