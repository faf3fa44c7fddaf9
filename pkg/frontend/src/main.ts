/**
 * Browser entry point: wires the canvas, status bar, and control buttons
 * to a LabelerClient speaking through the local bridge (SSE in, POST out).
 */

import { LabelerClient } from "./client.js";
import { renderFrame } from "./render.js";
import { makeTransform } from "./transform.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

function fmt(v: number | null | undefined, digits = 3): string {
  return v === null || v === undefined ? "–" : v.toFixed(digits);
}

function start(): void {
  const canvas = byId<HTMLCanvasElement>("grid");
  const status = byId<HTMLDivElement>("status");
  const gateBox = byId<HTMLDivElement>("gate");
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("canvas 2d context unavailable");
  const transform = makeTransform(canvas.width, canvas.height, 8);

  const client = new LabelerClient((line) => {
    void fetch("/send", { method: "POST", body: line });
  });

  function redraw(): void {
    const s = client.state;
    if (s.frame) {
      renderFrame(s.frame, ctx!, transform, { lastExpert: s.lastExpert });
    }
    canvas.style.cursor = client.clickable ? "crosshair" : "not-allowed";
    const parts = [
      s.connected ? "connected" : "disconnected",
      s.frame ? `tick ${s.frame.tick}` : "no frame",
      s.frame ? `samples ${s.frame.samples}` : "",
      s.paused ? "paused" : "",
      s.lastError ? `last error: ${s.lastError}` : "",
    ];
    status.textContent = parts.filter(Boolean).join(" | ");
    if (s.episodeEnd) {
      status.textContent =
        `episode over: ${s.episodeEnd.samples} samples, ` +
        `collision rate ${fmt(s.episodeEnd.collision_rate)}, ` +
        `safe ratio ${fmt(s.episodeEnd.safe_ratio)}`;
    }
    const g = s.frame?.gate;
    gateBox.textContent = g
      ? `tau ${fmt(g.tau, 2)} (hat ${fmt(g.tau_hat)})  ` +
        `chi ${fmt(g.chi, 2)} (hat ${g.chi_hat ? g.chi_hat.map((v) => fmt(v)).join(", ") : "–"})`
      : "";
  }
  client.onUpdate = redraw;

  canvas.addEventListener("click", (ev) => {
    const rect = canvas.getBoundingClientRect();
    client.click(ev.clientX - rect.left, ev.clientY - rect.top, transform);
  });
  byId<HTMLButtonElement>("pause").addEventListener("click", () => client.pause());
  byId<HTMLButtonElement>("resume").addEventListener("click", () => client.resume());
  byId<HTMLButtonElement>("abort").addEventListener("click", () => client.abort());

  const events = new EventSource("/events");
  events.onopen = () => client.setConnected(true);
  events.onerror = () => client.setConnected(false);
  events.onmessage = (ev) => client.receive(ev.data + "\n");
}

start();
