/** Client-side Ed25519 session keys.
 *
 * The key lives in memory only; every write request carries a detached
 * signature over `METHOD \n path \n sha256(body) \n timestamp`, matching
 * the node's X-Biotrak-* header scheme.
 */

const PKCS8_PREFIX = hexToBytes("302e020100300506032b657004220420");

export function hexToBytes(hex: string): Uint8Array {
  const clean = hex.trim().toLowerCase();
  if (!/^[0-9a-f]*$/.test(clean) || clean.length % 2 !== 0) {
    throw new Error("invalid hex string");
  }
  const out = new Uint8Array(clean.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(clean.slice(i * 2, i * 2 + 2), 16);
  }
  return out;
}

export function bytesToHex(bytes: Uint8Array): string {
  return Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");
}

export function bytesToBase64(bytes: Uint8Array): string {
  let binary = "";
  for (let i = 0; i < bytes.length; i += 0x8000) {
    binary += String.fromCharCode(...bytes.subarray(i, i + 0x8000));
  }
  return btoa(binary);
}

function base64UrlToBytes(b64url: string): Uint8Array {
  const b64 = b64url.replace(/-/g, "+").replace(/_/g, "/");
  const pad = b64 + "=".repeat((4 - (b64.length % 4)) % 4);
  const binary = atob(pad);
  return Uint8Array.from(binary, (c) => c.charCodeAt(0));
}

async function sha256(data: Uint8Array): Promise<Uint8Array> {
  return new Uint8Array(await crypto.subtle.digest("SHA-256", data as BufferSource));
}

export class SessionKey {
  private constructor(
    readonly fingerprint: string,
    readonly publicKeyHex: string,
    private readonly key: CryptoKey,
  ) {}

  /** Import a raw 32-byte private key (hex), as written by `biotrak keygen`. */
  static async fromPrivateHex(privateHex: string): Promise<SessionKey> {
    const seed = hexToBytes(privateHex);
    if (seed.length !== 32) {
      throw new Error("private key must be 32 bytes of hex");
    }
    const pkcs8 = new Uint8Array(PKCS8_PREFIX.length + 32);
    pkcs8.set(PKCS8_PREFIX);
    pkcs8.set(seed, PKCS8_PREFIX.length);
    const key = await crypto.subtle.importKey(
      "pkcs8", pkcs8 as BufferSource, { name: "Ed25519" }, true, ["sign"],
    );
    const jwk = await crypto.subtle.exportKey("jwk", key);
    if (!jwk.x) {
      throw new Error("could not derive the public key");
    }
    const pub = base64UrlToBytes(jwk.x);
    const fingerprint = bytesToHex((await sha256(pub)).subarray(0, 8));
    return new SessionKey(fingerprint, bytesToHex(pub), key);
  }

  async sign(message: Uint8Array): Promise<Uint8Array> {
    const sig = await crypto.subtle.sign("Ed25519", this.key, message as BufferSource);
    return new Uint8Array(sig);
  }

  async authHeaders(
    method: string, path: string, body: Uint8Array, timestamp?: number,
  ): Promise<Record<string, string>> {
    const ts = String(timestamp ?? Math.floor(Date.now() / 1000));
    const bodyDigest = bytesToHex(await sha256(body));
    const message = new TextEncoder().encode(`${method}\n${path}\n${bodyDigest}\n${ts}`);
    const signature = await this.sign(message);
    return {
      "X-Biotrak-Actor": this.fingerprint,
      "X-Biotrak-Timestamp": ts,
      "X-Biotrak-Signature": bytesToBase64(signature),
    };
  }
}
