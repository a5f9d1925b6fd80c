/** HTTP client for the node API.  Reads are anonymous; writes sign the
 * exact bytes sent with the loaded session key. */

import { SessionKey, bytesToBase64 } from "./signing.js";
import type {
  ActorView,
  ApiResult,
  HistoryResponse,
  SubmitReceipt,
  TemperatureResponse,
  TerminateResponse,
  TxView,
} from "./types.js";

const MULTIPART_BOUNDARY = "biotrakconsoleform";

async function failureFrom(resp: Response): Promise<{ status: number; error: string; message: string; line?: number }> {
  try {
    const doc = await resp.json();
    return {
      status: resp.status,
      error: typeof doc.error === "string" ? doc.error : `http-${resp.status}`,
      message: typeof doc.message === "string" ? doc.message : "",
      line: typeof doc.line === "number" ? doc.line : undefined,
    };
  } catch {
    return { status: resp.status, error: `http-${resp.status}`, message: "" };
  }
}

export class BiotrakClient {
  constructor(
    readonly baseUrl: string,
    public session: SessionKey | null = null,
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async getHistory(lot: string): Promise<HistoryResponse | null> {
    const resp = await fetch(this.url(`/v1/lots/${lot}/history`));
    if (resp.status === 404) return null;
    if (!resp.ok) throw new Error(`history failed: ${resp.status}`);
    return (await resp.json()) as HistoryResponse;
  }

  async getTemperature(lot: string, txId: string): Promise<TemperatureResponse | "no-sensor" | null> {
    const resp = await fetch(this.url(`/v1/lots/${lot}/transports/${txId}/temperature`));
    if (resp.status === 404) return null;
    if (resp.status === 204) return "no-sensor";
    if (!resp.ok) throw new Error(`temperature failed: ${resp.status}`);
    return (await resp.json()) as TemperatureResponse;
  }

  async getActor(actorId: string): Promise<ActorView | null> {
    const resp = await fetch(this.url(`/v1/actors/${actorId}`));
    if (resp.status === 404) return null;
    if (!resp.ok) throw new Error(`actor lookup failed: ${resp.status}`);
    return (await resp.json()) as ActorView;
  }

  async getHead(): Promise<{ height: number; block_hash: string; chain_id: string }> {
    const resp = await fetch(this.url("/v1/chain/head"));
    if (!resp.ok) throw new Error(`head failed: ${resp.status}`);
    return await resp.json();
  }

  async getLotCode(lot: string): Promise<string | null> {
    const resp = await fetch(this.url(`/v1/codes/lot/${lot}`));
    if (resp.status === 404) return null;
    if (!resp.ok) throw new Error(`code lookup failed: ${resp.status}`);
    return (await resp.json()).payload as string;
  }

  /** Roles granted to the loaded session key, [] when anonymous/unknown. */
  async sessionRoles(): Promise<string[]> {
    if (!this.session) return [];
    const actor = await this.getActor(this.session.fingerprint);
    return actor ? actor.roles : [];
  }

  async submitTx(tx: Partial<TxView>): Promise<ApiResult<SubmitReceipt>> {
    if (!this.session) {
      return { ok: false, status: 0, error: "no-session", message: "load a key first" };
    }
    const body = new TextEncoder().encode(JSON.stringify({ tx }));
    const headers = await this.session.authHeaders("POST", "/v1/tx", body);
    headers["Content-Type"] = "application/json";
    const resp = await fetch(this.url("/v1/tx"), {
      method: "POST",
      headers,
      body: body as BodyInit,
    });
    if (!resp.ok) {
      return { ok: false, ...(await failureFrom(resp)) };
    }
    return { ok: true, data: (await resp.json()) as SubmitReceipt };
  }

  async terminateTransport(
    transportTxId: string, dump: Uint8Array, filename = "dump.csv",
  ): Promise<ApiResult<TerminateResponse>> {
    if (!this.session) {
      return { ok: false, status: 0, error: "no-session", message: "load a key first" };
    }
    const head = new TextEncoder().encode(
      `--${MULTIPART_BOUNDARY}\r\n` +
      `Content-Disposition: form-data; name="dump"; filename="${filename}"\r\n` +
      `Content-Type: text/csv\r\n\r\n`,
    );
    const tail = new TextEncoder().encode(`\r\n--${MULTIPART_BOUNDARY}--\r\n`);
    const body = new Uint8Array(head.length + dump.length + tail.length);
    body.set(head);
    body.set(dump, head.length);
    body.set(tail, head.length + dump.length);

    const path = `/v1/transport/${transportTxId}/terminate`;
    const headers = await this.session.authHeaders("POST", path, body);
    headers["Content-Type"] = `multipart/form-data; boundary=${MULTIPART_BOUNDARY}`;
    const resp = await fetch(this.url(path), {
      method: "POST",
      headers,
      body: body as BodyInit,
    });
    if (!resp.ok) {
      return { ok: false, ...(await failureFrom(resp)) };
    }
    return { ok: true, data: (await resp.json()) as TerminateResponse };
  }
}

export function randomTxId(): string {
  const bytes = new Uint8Array(16);
  crypto.getRandomValues(bytes);
  return Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");
}

export { bytesToBase64 };
