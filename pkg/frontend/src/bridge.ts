/**
 * Local bridge between the browser and the labeling TCP service.
 *
 * Browsers cannot open raw TCP sockets, so this small Node process exposes
 * the session as plain HTTP on localhost: server lines stream out over
 * Server-Sent Events (GET /events) and client lines go back with POST
 * /send. Both directions stay line-delimited JSON, so the bridge never
 * interprets messages. It also serves the static UI files.
 *
 *   node dist/bridge.js --connect 127.0.0.1:7601 [--listen 7600]
 */

import * as fs from "node:fs";
import * as http from "node:http";
import * as net from "node:net";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

interface Args {
  connectHost: string;
  connectPort: number;
  listenPort: number;
}

function parseArgs(argv: string[]): Args {
  let connect = "";
  let listenPort = 7600;
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--connect") connect = argv[++i] ?? "";
    else if (argv[i] === "--listen") listenPort = Number(argv[++i]);
  }
  const [host, port] = connect.split(":");
  if (!host || !port) {
    console.error("usage: bridge --connect host:port [--listen port]");
    process.exit(2);
  }
  return { connectHost: host, connectPort: Number(port), listenPort };
}

const STATIC_FILES: Record<string, { file: string; type: string }> = {
  "/": { file: "index.html", type: "text/html; charset=utf-8" },
  "/index.html": { file: "index.html", type: "text/html; charset=utf-8" },
};

export function startBridge(args: Args): http.Server {
  const here = path.dirname(fileURLToPath(import.meta.url));
  const root = path.resolve(here, "..");
  let upstream: net.Socket | null = null;
  let subscriber: http.ServerResponse | null = null;
  let backlog = "";

  function ensureUpstream(): net.Socket {
    if (upstream && !upstream.destroyed) return upstream;
    upstream = net.createConnection(args.connectPort, args.connectHost);
    upstream.setEncoding("utf-8");
    upstream.on("data", (chunk: string) => {
      // one SSE event per protocol line; partial lines wait in the backlog
      backlog += chunk;
      let idx: number;
      while ((idx = backlog.indexOf("\n")) >= 0) {
        const line = backlog.slice(0, idx);
        backlog = backlog.slice(idx + 1);
        if (subscriber) subscriber.write(`data: ${line}\n\n`);
      }
    });
    upstream.on("close", () => {
      if (subscriber) subscriber.end();
      subscriber = null;
      upstream = null;
    });
    upstream.on("error", (err) => {
      console.error(`upstream error: ${err.message}`);
    });
    return upstream;
  }

  const server = http.createServer((req, res) => {
    const url = req.url ?? "/";
    if (req.method === "GET" && url === "/events") {
      if (subscriber) {
        res.writeHead(409).end("one client at a time");
        return;
      }
      res.writeHead(200, {
        "Content-Type": "text/event-stream",
        "Cache-Control": "no-cache",
        Connection: "keep-alive",
      });
      subscriber = res;
      ensureUpstream();
      req.on("close", () => {
        subscriber = null;
      });
      return;
    }
    if (req.method === "POST" && url === "/send") {
      let body = "";
      req.setEncoding("utf-8");
      req.on("data", (c) => (body += c));
      req.on("end", () => {
        const sock = ensureUpstream();
        sock.write(body.endsWith("\n") ? body : body + "\n");
        res.writeHead(204).end();
      });
      return;
    }
    if (req.method === "GET") {
      const entry = STATIC_FILES[url];
      const fsPath = entry
        ? path.join(root, entry.file)
        : url.startsWith("/dist/") && url.endsWith(".js")
          ? path.join(root, path.normalize(url).replace(/^([.][.][/\\])+/, ""))
          : null;
      if (fsPath && fs.existsSync(fsPath)) {
        const type = entry ? entry.type : "text/javascript; charset=utf-8";
        res.writeHead(200, { "Content-Type": type });
        res.end(fs.readFileSync(fsPath));
        return;
      }
    }
    res.writeHead(404).end("not found");
  });

  server.listen(args.listenPort, "127.0.0.1", () => {
    const addr = server.address();
    const port = typeof addr === "object" && addr ? addr.port : args.listenPort;
    console.log(`labeler ui on http://127.0.0.1:${port}/`);
  });
  return server;
}

const isMain =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${path.resolve(process.argv[1])}`).href;
if (isMain) {
  startBridge(parseArgs(process.argv.slice(2)));
}
