/** Dev static server for the console with API proxying.
 *
 *   node dist/tools/serve.js [--port 5173] [--api http://127.0.0.1:8080]
 *
 * Serves index.html/style.css/dist and forwards /v1/* to the node API so
 * the console runs same-origin without CORS setup.
 */

import { createServer, request as httpRequest } from "node:http";
import { readFile } from "node:fs/promises";
import { extname, join, normalize } from "node:path";
import { fileURLToPath } from "node:url";

const root = normalize(join(fileURLToPath(import.meta.url), "..", "..", ".."));

function arg(name: string, fallback: string): string {
  const i = process.argv.indexOf(name);
  return i >= 0 && process.argv[i + 1] ? process.argv[i + 1] : fallback;
}

const port = parseInt(arg("--port", "5173"), 10);
const api = new URL(arg("--api", "http://127.0.0.1:8080"));

const MIME: Record<string, string> = {
  ".html": "text/html; charset=utf-8",
  ".css": "text/css; charset=utf-8",
  ".js": "text/javascript; charset=utf-8",
  ".json": "application/json",
  ".svg": "image/svg+xml",
};

const server = createServer(async (req, res) => {
  const url = req.url ?? "/";
  if (url.startsWith("/v1/")) {
    const proxied = httpRequest(
      { host: api.hostname, port: api.port, path: url, method: req.method, headers: req.headers },
      (upstream) => {
        res.writeHead(upstream.statusCode ?? 502, upstream.headers);
        upstream.pipe(res);
      },
    );
    proxied.on("error", () => {
      res.writeHead(502).end("node API unreachable");
    });
    req.pipe(proxied);
    return;
  }
  const path = url === "/" ? "/index.html" : url.split("?")[0];
  const file = normalize(join(root, path));
  if (!file.startsWith(root)) {
    res.writeHead(403).end();
    return;
  }
  try {
    const body = await readFile(file);
    res.writeHead(200, { "Content-Type": MIME[extname(file)] ?? "application/octet-stream" });
    res.end(body);
  } catch {
    res.writeHead(404).end("not found");
  }
});

server.listen(port, "127.0.0.1", () => {
  console.log(`console at http://127.0.0.1:${port}  (API proxy -> ${api.href})`);
});
