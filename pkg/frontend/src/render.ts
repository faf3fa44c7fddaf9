/**
 * Pure canvas rendering of a session frame.
 *
 * Drawing goes through the minimal Surface2D interface below (a strict
 * subset of CanvasRenderingContext2D) so rendering stays testable without
 * a DOM: tests pass a recording stub, the browser passes the real context.
 */

import { GRID_N, SessionFrame } from "./protocol.js";
import {
  Transform,
  actionToCanvas,
  cellToCanvas,
  metersToCanvas,
} from "./transform.js";

export interface Surface2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  ellipse(
    x: number,
    y: number,
    rx: number,
    ry: number,
    rotation: number,
    start: number,
    end: number,
  ): void;
  arc(x: number, y: number, r: number, start: number, end: number): void;
  stroke(): void;
  fill(): void;
}

export const COLORS = {
  background: "#101418",
  drivable: "#1d3a2f",
  occupied: "#3a3f46",
  disagree: "#7a5a22",
  unreachable: "#162a23",
  preview: "#e8c540",
  netMean: "#4f9dde",
  variance: "#4f9dde",
  tauCircle: "#3a6fd8",
  anchor: "#d84a4a",
  lastClick: "#d8d8d8",
} as const;

export interface RenderExtras {
  /** Last accepted expert click, for the tau threshold circle. */
  lastExpert?: { ax: number; ay: number } | null;
}

/**
 * Draw one frame: tinted drivable space, occupied space, clean-vs-noisy
 * disagreement, reachability shading, rollout preview polyline, network
 * mean with its variance ellipse, and the tau circle around the last
 * expert point.
 */
export function renderFrame(
  frame: SessionFrame,
  ctx: Surface2D,
  t: Transform,
  extras: RenderExtras = {},
): void {
  const side = GRID_N * t.cellPx;
  ctx.fillStyle = COLORS.background;
  ctx.fillRect(t.left, t.top, side, side);

  for (let row = 0; row < GRID_N; row++) {
    for (let col = 0; col < GRID_N; col++) {
      const i = row * GRID_N + col;
      const clean = frame.clean[i];
      const noisy = frame.noisy[i];
      if (clean !== noisy) {
        ctx.fillStyle = COLORS.disagree;
      } else if (clean === 1) {
        ctx.fillStyle = COLORS.occupied;
      } else if (frame.reachable[i] === 1) {
        ctx.fillStyle = COLORS.drivable;
      } else {
        ctx.fillStyle = COLORS.unreachable;
      }
      ctx.fillRect(t.left + col * t.cellPx, t.top + row * t.cellPx, t.cellPx, t.cellPx);
    }
  }

  if (frame.preview.length > 1) {
    ctx.strokeStyle = COLORS.preview;
    ctx.lineWidth = Math.max(1, t.cellPx / 8);
    ctx.beginPath();
    const first = metersToCanvas(frame.preview[0][0], frame.preview[0][1], t);
    ctx.moveTo(first.x, first.y);
    for (const [f, r] of frame.preview.slice(1)) {
      const p = metersToCanvas(f, r, t);
      ctx.lineTo(p.x, p.y);
    }
    ctx.stroke();
  }

  if (frame.net !== null) {
    const mean = actionToCanvas(frame.net.mean[0], frame.net.mean[1], t);
    // variance is in squared normalized units; the ellipse radius is one
    // standard deviation mapped through the action-to-pixel scale
    const rx = Math.sqrt(frame.net.variance[0]) * (GRID_N - 1) * t.cellPx;
    const ry = Math.sqrt(frame.net.variance[1]) * (GRID_N - 1) * t.cellPx;
    ctx.strokeStyle = COLORS.variance;
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.ellipse(mean.x, mean.y, rx, ry, 0, 0, 2 * Math.PI);
    ctx.stroke();
    ctx.fillStyle = COLORS.netMean;
    ctx.beginPath();
    ctx.arc(mean.x, mean.y, Math.max(2, t.cellPx / 4), 0, 2 * Math.PI);
    ctx.fill();
  }

  if (extras.lastExpert) {
    const p = actionToCanvas(extras.lastExpert.ax, extras.lastExpert.ay, t);
    const r = frame.gate.tau * (GRID_N - 1) * t.cellPx;
    ctx.strokeStyle = COLORS.tauCircle;
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.arc(p.x, p.y, r, 0, 2 * Math.PI);
    ctx.stroke();
    ctx.fillStyle = COLORS.lastClick;
    ctx.beginPath();
    ctx.arc(p.x, p.y, Math.max(2, t.cellPx / 5), 0, 2 * Math.PI);
    ctx.fill();
  }

  // anchor marker: bottom-center by construction of the transform
  const anchor = cellToCanvas(GRID_N - 1, (GRID_N - 1) / 2, t);
  ctx.fillStyle = COLORS.anchor;
  ctx.beginPath();
  ctx.arc(anchor.x, anchor.y, Math.max(2, t.cellPx / 3), 0, 2 * Math.PI);
  ctx.fill();
}
