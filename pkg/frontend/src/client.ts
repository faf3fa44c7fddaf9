/**
 * Transport-agnostic session client and view state.
 *
 * The client consumes raw byte chunks (from any stream) and exposes a
 * ViewState snapshot; it emits wire lines through an injected sender.
 * All state transitions happen in message arrival order, so replaying a
 * recorded stream reproduces the exact same view states.
 */

import {
  ClientMessage,
  EpisodeEndMessage,
  LineDecoder,
  ProtocolError,
  SessionFrame,
  encodeMessage,
} from "./protocol.js";
import { Transform, clickToAction } from "./transform.js";

export type SessionMode = "bc" | "dagger";

export interface ViewState {
  frame: SessionFrame | null;
  connected: boolean;
  mode: SessionMode;
  /** Click sent, ack not yet received. */
  pendingClick: { ax: number; ay: number } | null;
  /** Last accepted click (tau circle center). */
  lastExpert: { ax: number; ay: number } | null;
  lastError: string | null;
  episodeEnd: EpisodeEndMessage["metrics"] | null;
  paused: boolean;
}

export class LabelerClient {
  readonly state: ViewState;
  onUpdate: (() => void) | null = null;
  private decoder = new LineDecoder();
  private send: (line: string) => void;

  constructor(send: (line: string) => void, mode: SessionMode = "bc") {
    this.send = send;
    this.state = {
      frame: null,
      connected: false,
      mode,
      pendingClick: null,
      lastExpert: null,
      lastError: null,
      episodeEnd: null,
      paused: false,
    };
  }

  setConnected(connected: boolean): void {
    this.state.connected = connected;
    this.notify();
  }

  /** Feed raw bytes from the transport. */
  receive(chunk: string): void {
    let messages;
    try {
      messages = this.decoder.push(chunk);
    } catch (err) {
      // malformed line: keep the last good frame, surface the error
      if (err instanceof ProtocolError) {
        this.state.lastError = err.message;
        this.notify();
        return;
      }
      throw err;
    }
    for (const msg of messages) {
      switch (msg.type) {
        case "frame":
          this.state.frame = msg;
          this.state.lastError = null;
          break;
        case "ack":
          if (this.state.pendingClick) {
            this.state.lastExpert = this.state.pendingClick;
            this.state.pendingClick = null;
          }
          break;
        case "reject":
          this.state.pendingClick = null;
          this.state.lastError = msg.reason;
          break;
        case "episode_end":
          this.state.episodeEnd = msg.metrics;
          break;
      }
    }
    if (messages.length > 0) this.notify();
  }

  /** True iff the session is waiting for a human label right now. */
  get clickable(): boolean {
    return (
      this.state.frame !== null &&
      this.state.frame.awaiting_input &&
      this.state.pendingClick === null &&
      this.state.episodeEnd === null &&
      !this.state.paused
    );
  }

  /**
   * Handle a canvas click: snap, validate, send. Returns the normalized
   * action sent, or null when the click was ignored (not awaiting input,
   * outside the grid, or a click already in flight).
   */
  click(px: number, py: number, t: Transform): { ax: number; ay: number } | null {
    if (!this.clickable) return null;
    const hit = clickToAction(px, py, t);
    if (hit === null) return null;
    const action = { ax: hit.ax, ay: hit.ay };
    this.state.pendingClick = action;
    this.sendMessage({ type: "action", ...action });
    this.notify();
    return action;
  }

  pause(): void {
    this.state.paused = true;
    this.sendMessage({ type: "control", cmd: "pause" });
    this.notify();
  }

  resume(): void {
    this.state.paused = false;
    this.sendMessage({ type: "control", cmd: "resume" });
    this.notify();
  }

  abort(): void {
    this.sendMessage({ type: "control", cmd: "abort" });
  }

  private sendMessage(msg: ClientMessage): void {
    this.send(encodeMessage(msg));
  }

  private notify(): void {
    if (this.onUpdate) this.onUpdate();
  }
}
