/** Browser shell: wires the pure renderers to the DOM.
 *
 * Reads work without any key (anonymous consumers).  Loading a key hex
 * enables the forms its on-chain roles allow; the key never leaves the
 * page.
 */

import { BiotrakClient, randomTxId } from "./api.js";
import { computeChart, renderChartSvg } from "./chart.js";
import { lotFromInput, PayloadError } from "./codes.js";
import { SessionKey } from "./signing.js";
import { buildTreeRows } from "./tree.js";
import {
  renderComplianceSummary,
  renderError,
  renderNotFound,
  renderProductionForm,
  renderTerminateForm,
  renderTreeHtml,
} from "./views.js";

const qs = (sel: string) => document.querySelector(sel) as HTMLElement;

const apiBase =
  new URLSearchParams(location.search).get("api") ?? `${location.protocol}//${location.host}`;
const client = new BiotrakClient(apiBase);
let roles: string[] = [];

async function loadSession(privateHex: string): Promise<void> {
  const status = qs("#session-status");
  try {
    client.session = await SessionKey.fromPrivateHex(privateHex);
  } catch (err) {
    status.innerHTML = renderError("bad-key", (err as Error).message);
    return;
  }
  roles = await client.sessionRoles();
  const actor = await client.getActor(client.session.fingerprint);
  const name = actor?.display_name || "unregistered key";
  status.innerHTML =
    `<span class="badge badge-ok">${name}</span> ` +
    `<code>${client.session.fingerprint}</code> roles: ${roles.join(", ") || "none"}`;
  renderForms();
}

function renderForms(): void {
  qs("#production-section").innerHTML = renderProductionForm(roles);
  qs("#terminate-section").innerHTML = renderTerminateForm(roles);
  bindProductionForm();
  bindTerminateForm();
}

async function trace(input: string): Promise<void> {
  const out = qs("#trace-result");
  let lot: string;
  try {
    lot = lotFromInput(input);
  } catch (err) {
    const pe = err as PayloadError;
    out.innerHTML = renderError(pe.code ?? "invalid-id", pe.message);
    return;
  }
  const history = await client.getHistory(lot);
  if (history === null) {
    out.innerHTML = renderNotFound(lot);
    return;
  }
  const rows = buildTreeRows(history);
  out.innerHTML = `<h3>${lot}</h3>` + renderTreeHtml(rows);
  for (const row of rows.filter((r) => r.kind === "transport_end")) {
    const el = out.querySelector(`[data-tx="${row.txId}"]`);
    el?.addEventListener("click", () => showTemperature(lot, row.txId));
  }
}

async function showTemperature(lot: string, txId: string): Promise<void> {
  const out = qs("#temperature-result");
  const resp = await client.getTemperature(lot, txId);
  if (resp === null) {
    out.innerHTML = renderError("not-found", "no such transport leg");
    return;
  }
  if (resp === "no-sensor") {
    out.innerHTML = `<div class="banner banner-notice">This leg carries no sensor payload.</div>`;
    return;
  }
  const geo = computeChart(resp);
  out.innerHTML =
    `<h3>Sensor ${resp.sensor_id}</h3>` +
    renderChartSvg(geo) +
    (resp.report ? renderComplianceSummary(resp.report) : "");
}

function bindProductionForm(): void {
  const form = document.getElementById("production-form") as HTMLFormElement | null;
  form?.addEventListener("submit", async (ev) => {
    ev.preventDefault();
    const out = qs("#production-result");
    const data = new FormData(form);
    const inputs = String(data.get("input_lots") ?? "")
      .split(",").map((s) => s.trim()).filter(Boolean);
    const parameters = String(data.get("parameters") ?? "")
      .split("\n").map((line) => line.trim()).filter((line) => line.includes("="))
      .map((line) => {
        const [key, ...rest] = line.split("=");
        return { key: key.trim(), type: "string" as const, value: rest.join("=").trim() };
      });
    const result = await client.submitTx({
      tx_id: randomTxId(),
      process_type: "production",
      actor_id: client.session!.fingerprint,
      role: "producer",
      input_lots: inputs,
      output_lot: String(data.get("output_lot") ?? "") || null,
      parameters,
      created_at: Math.floor(Date.now() / 1000),
    });
    if (!result.ok) {
      out.innerHTML = renderError(result.error, result.message, result.line);
      return;
    }
    out.innerHTML =
      `<div class="banner banner-ok">Committed as tx ` +
      `<code>${result.data.tx_id}</code> (${result.data.status}).</div>`;
  });
}

function bindTerminateForm(): void {
  const form = document.getElementById("terminate-form") as HTMLFormElement | null;
  form?.addEventListener("submit", async (ev) => {
    ev.preventDefault();
    const out = qs("#terminate-result");
    const data = new FormData(form);
    const file = data.get("dump") as File | null;
    if (!file) {
      out.innerHTML = renderError("missing-dump", "choose a sensor dump file");
      return;
    }
    const dump = new Uint8Array(await file.arrayBuffer());
    const txId = String(data.get("transport_id") ?? "").trim();
    const result = await client.terminateTransport(txId, dump, file.name);
    if (!result.ok) {
      out.innerHTML = renderError(result.error, result.message, result.line);
      return;
    }
    const doc = result.data;
    const chartDoc = { sensor_id: doc.sensor_id, samples: doc.samples,
                       tx_id: doc.tx_id, report: doc.report };
    out.innerHTML =
      `<div class="banner banner-ok">Transport terminated: tx <code>${doc.tx_id}</code></div>` +
      renderChartSvg(computeChart(chartDoc)) +
      (doc.report ? renderComplianceSummary(doc.report) : "");
  });
}

function main(): void {
  qs("#api-base").textContent = apiBase;
  qs("#trace-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    const input = (document.getElementById("trace-input") as HTMLInputElement).value;
    void trace(input);
  });
  qs("#session-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    const hex = (document.getElementById("key-input") as HTMLInputElement).value;
    void loadSession(hex);
  });
  renderForms();
}

main();
