/** Parser for the textual payloads carried in BioTrak QR codes:
 *
 *   biotrak://lot/<id>?c=<hint>
 *   biotrak://note/<id>?c=<hint>
 *   biotrak://sensor/<sensor_id>/lot/<lot>?c=<hint>
 */

export type CodeKind = "lot" | "note" | "sensor";

export interface CodePayload {
  kind: CodeKind;
  subjectId: string;
  chainHint: string;
  lot?: string;
}

const ID_RE = /^[A-Z0-9.\-]{1,64}$/;
const HINT_RE = /^[0-9a-f]{8}$/;

export class PayloadError extends Error {
  constructor(readonly code: string, message: string) {
    super(message);
  }
}

export function parsePayload(input: string): CodePayload {
  const m = /^biotrak:\/\/([a-z]+)\/(.*)$/.exec(input);
  if (!m) {
    throw new PayloadError("unsupported-payload", "not a biotrak:// payload");
  }
  const kindName = m[1];
  let rest = m[2];
  const q = rest.indexOf("?");
  if (q < 0) {
    throw new PayloadError("missing-chain-hint", "payload lacks the ?c= chain hint");
  }
  const query = rest.slice(q + 1);
  rest = rest.slice(0, q);
  const qm = /^c=([0-9a-f]{8})$/.exec(query);
  if (!qm || !HINT_RE.test(qm[1])) {
    throw new PayloadError("missing-chain-hint", `bad chain hint query: ${query}`);
  }
  const hint = qm[1];

  if (kindName === "sensor") {
    const sm = /^([^/]*)\/lot\/([^/]*)$/.exec(rest);
    if (!sm) {
      throw new PayloadError("unsupported-payload", "sensor payloads need /lot/ segments");
    }
    if (!ID_RE.test(sm[1]) || !ID_RE.test(sm[2])) {
      throw new PayloadError("invalid-id", "bad characters in sensor payload");
    }
    return { kind: "sensor", subjectId: sm[1], chainHint: hint, lot: sm[2] };
  }
  if (kindName !== "lot" && kindName !== "note") {
    throw new PayloadError("unsupported-payload", `unknown payload kind: ${kindName}`);
  }
  if (rest.includes("/")) {
    throw new PayloadError("invalid-id", "unexpected path segment");
  }
  if (!ID_RE.test(rest)) {
    throw new PayloadError("invalid-id", `bad characters in id: ${rest}`);
  }
  return { kind: kindName, subjectId: rest, chainHint: hint };
}

/** Accepts a pasted payload or a bare lot code; returns the lot to trace. */
export function lotFromInput(input: string): string {
  const text = input.trim();
  if (text.startsWith("biotrak://")) {
    const payload = parsePayload(text);
    if (payload.kind === "lot") return payload.subjectId;
    if (payload.kind === "sensor" && payload.lot) return payload.lot;
    throw new PayloadError("unsupported-payload", `a ${payload.kind} code does not name a lot`);
  }
  if (!ID_RE.test(text)) {
    throw new PayloadError("invalid-id", `bad lot code: ${text}`);
  }
  return text;
}
