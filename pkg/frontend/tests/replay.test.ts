/**
 * End-to-end integrity check against the real labeling service: a scripted
 * client performs a 50-click session, then a second client replays the
 * recorded click log into a fresh session of the same seed. The two
 * persisted datasets must be byte-identical.
 */

import { spawn, spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as net from "node:net";
import * as os from "node:os";
import * as path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { LineDecoder, SessionFrame, encodeMessage } from "../src/protocol.js";

const REPO_ROOT = path.resolve(__dirname, "..", "..");
const GRID_N = 25;
const N_CLICKS = 50;

let workDir: string;
let worldFile: string;

beforeAll(() => {
  workDir = fs.mkdtempSync(path.join(os.tmpdir(), "labeler-replay-"));
  worldFile = path.join(workDir, "world.udlw");
  const gen = spawnSync(
    "python3",
    ["-m", "udl.cli", "gen-world", "--seed", "0", "--template", "corridor",
     "--out", worldFile],
    { cwd: REPO_ROOT },
  );
  expect(gen.status).toBe(0);
});

afterAll(() => {
  fs.rmSync(workDir, { recursive: true, force: true });
});

/** Farthest reachable cell, preferring centered columns: a scripted human. */
function pickClick(frame: SessionFrame): { ax: number; ay: number } {
  for (let row = 0; row < GRID_N; row++) {
    const cols = [...Array(GRID_N).keys()].sort(
      (a, b) => Math.abs(a - 12) - Math.abs(b - 12) || a - b,
    );
    for (const col of cols) {
      if (frame.reachable[row * GRID_N + col] === 1) {
        return { ax: col / (GRID_N - 1), ay: (GRID_N - 1 - row) / (GRID_N - 1) };
      }
    }
  }
  throw new Error("frame has no reachable cell");
}

interface SessionResult {
  clicks: { ax: number; ay: number }[];
  samples: number;
}

/**
 * Run one scripted session against a fresh server. With a replay log the
 * client resends exactly those actions; otherwise it picks its own.
 */
function runSession(
  datasetPath: string,
  replay: { ax: number; ay: number }[] | null,
): Promise<SessionResult> {
  return new Promise((resolve, reject) => {
    const server = spawn(
      "python3",
      ["-m", "udl.cli", "serve-labeler", "--seed", "0", "--world", worldFile,
       "--mode", "bc", "--dataset-out", datasetPath, "--port", "0"],
      { cwd: REPO_ROOT },
    );
    const clicks: { ax: number; ay: number }[] = [];
    let sent = 0;
    let sock: net.Socket | null = null;
    const fail = (err: Error) => {
      server.kill();
      sock?.destroy();
      reject(err);
    };
    server.on("error", fail);
    const timer = setTimeout(() => fail(new Error("session timed out")), 90_000);

    let banner = "";
    server.stdout.on("data", (chunk: Buffer) => {
      banner += chunk.toString();
      const m = banner.match(/labeling session on ([\d.]+):(\d+)/);
      if (!m || sock) return;
      sock = net.createConnection(Number(m[2]), m[1]);
      sock.setEncoding("utf-8");
      const decoder = new LineDecoder();
      sock.on("error", fail);
      sock.on("data", (data: string) => {
        for (const msg of decoder.push(data)) {
          if (msg.type === "reject") {
            fail(new Error(`unexpected reject: ${msg.reason}`));
            return;
          }
          if (msg.type === "episode_end") {
            clearTimeout(timer);
            sock!.end();
            server.on("exit", () =>
              resolve({ clicks, samples: msg.metrics.samples }),
            );
            return;
          }
          if (msg.type === "frame" && msg.awaiting_input) {
            if (sent === N_CLICKS) {
              sock!.write(encodeMessage({ type: "control", cmd: "abort" }));
              return;
            }
            const click = replay ? replay[sent] : pickClick(msg);
            clicks.push(click);
            sent += 1;
            sock!.write(encodeMessage({ type: "action", ...click }));
          }
        }
      });
    });
  });
}

describe("labeler service integrity", () => {
  it(
    "replaying a recorded 50-click session reproduces the dataset byte for byte",
    async () => {
      const fileA = path.join(workDir, "a.jsonl");
      const fileB = path.join(workDir, "b.jsonl");
      const first = await runSession(fileA, null);
      expect(first.samples).toBe(N_CLICKS);
      const second = await runSession(fileB, first.clicks);
      expect(second.samples).toBe(N_CLICKS);
      expect(second.clicks).toEqual(first.clicks);

      const bytesA = fs.readFileSync(fileA);
      const bytesB = fs.readFileSync(fileB);
      expect(bytesA.length).toBeGreaterThan(0);
      expect(bytesA.equals(bytesB)).toBe(true);
      // sanity: exactly one JSON sample per accepted click
      const lines = bytesA.toString().trim().split("\n");
      expect(lines).toHaveLength(N_CLICKS);
      for (const line of lines) {
        const sample = JSON.parse(line);
        expect(sample.src).toBe("bc");
        expect(sample.tau).toBe(0);
        expect(sample.grid).toHaveLength(625);
      }
    },
    { timeout: 180_000 },
  );
});
