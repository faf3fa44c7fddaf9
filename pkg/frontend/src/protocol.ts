/**
 * Labeling wire protocol: line-delimited JSON over a byte stream.
 *
 * Mirrors the harness message schema exactly; this module owns parsing,
 * validation, and framing so the rest of the UI only sees typed messages.
 */

export const PROTOCOL_VERSION = 1;
export const GRID_N = 25;
export const GRID_CELLS = GRID_N * GRID_N;
/** Sensor window edge length in meters (one cell = 0.8 m). */
export const EXTENT_M = 20;

export interface GateState {
  tau: number;
  chi: number;
  tau_hat: number | null;
  chi_hat: [number, number] | null;
}

export interface NetState {
  mean: [number, number];
  variance: [number, number];
}

export interface SessionFrame {
  type: "frame";
  version: number;
  tick: number;
  clean: number[];
  noisy: number[];
  reachable: number[];
  pose: [number, number, number];
  preview: [number, number][];
  net: NetState | null;
  gate: GateState;
  samples: number;
  awaiting_input: boolean;
}

export interface AckMessage {
  type: "ack";
  tick: number;
}

export interface RejectMessage {
  type: "reject";
  reason: string;
}

export interface EpisodeEndMessage {
  type: "episode_end";
  metrics: {
    collision_rate: number;
    safe_ratio: number;
    mean_speed: number;
    samples: number;
    finished: boolean;
  };
}

export type ServerMessage =
  | SessionFrame
  | AckMessage
  | RejectMessage
  | EpisodeEndMessage;

export interface ActionMessage {
  type: "action";
  ax: number;
  ay: number;
}

export interface ControlMessage {
  type: "control";
  cmd: "pause" | "resume" | "abort";
}

export type ClientMessage = ActionMessage | ControlMessage;

export class ProtocolError extends Error {}

export function encodeMessage(msg: ClientMessage): string {
  return JSON.stringify(msg) + "\n";
}

function isGridArray(v: unknown): v is number[] {
  return Array.isArray(v) && v.length === GRID_CELLS;
}

/** Parse one line into a typed server message; throws ProtocolError. */
export function parseServerMessage(line: string): ServerMessage {
  let obj: unknown;
  try {
    obj = JSON.parse(line);
  } catch {
    throw new ProtocolError(`not valid JSON: ${line.slice(0, 80)}`);
  }
  if (typeof obj !== "object" || obj === null) {
    throw new ProtocolError("message is not an object");
  }
  const msg = obj as Record<string, unknown>;
  switch (msg.type) {
    case "frame": {
      if (msg.version !== PROTOCOL_VERSION) {
        throw new ProtocolError(`unsupported protocol version ${msg.version}`);
      }
      if (
        !isGridArray(msg.clean) ||
        !isGridArray(msg.noisy) ||
        !isGridArray(msg.reachable)
      ) {
        throw new ProtocolError("frame grids must have 625 cells");
      }
      if (!Array.isArray(msg.pose) || msg.pose.length !== 3) {
        throw new ProtocolError("frame pose must be [x, y, theta]");
      }
      if (typeof msg.awaiting_input !== "boolean") {
        throw new ProtocolError("frame missing awaiting_input");
      }
      return msg as unknown as SessionFrame;
    }
    case "ack":
      if (typeof msg.tick !== "number") {
        throw new ProtocolError("ack missing tick");
      }
      return msg as unknown as AckMessage;
    case "reject":
      if (typeof msg.reason !== "string") {
        throw new ProtocolError("reject missing reason");
      }
      return msg as unknown as RejectMessage;
    case "episode_end":
      if (typeof msg.metrics !== "object" || msg.metrics === null) {
        throw new ProtocolError("episode_end missing metrics");
      }
      return msg as unknown as EpisodeEndMessage;
    default:
      throw new ProtocolError(`unknown message type ${String(msg.type)}`);
  }
}

/**
 * Incremental NDJSON decoder: feed arbitrary chunks, get complete messages.
 * A trailing partial line is buffered until its newline arrives.
 */
export class LineDecoder {
  private buffer = "";

  push(chunk: string): ServerMessage[] {
    this.buffer += chunk;
    const out: ServerMessage[] = [];
    let idx: number;
    while ((idx = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, idx).trim();
      this.buffer = this.buffer.slice(idx + 1);
      if (line.length === 0) continue;
      out.push(parseServerMessage(line));
    }
    return out;
  }

  /** Bytes still waiting for a newline (diagnostics only). */
  get pending(): number {
    return this.buffer.length;
  }
}
