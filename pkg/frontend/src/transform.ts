/**
 * Grid <-> canvas coordinate transform.
 *
 * The 25x25 grid is drawn as a square: row 0 (farthest ahead) at the top,
 * the anchor cell (row 24, col 12) centered at the bottom. Normalized
 * actions map linearly onto cell centers: a_x = col/24, a_y = (24-row)/24.
 * Clicks snap to the nearest cell center, so a render -> click -> render
 * round trip never moves a point by more than half a cell.
 */

import { GRID_N, EXTENT_M } from "./protocol.js";

export const ANCHOR_ROW = GRID_N - 1;
export const ANCHOR_COL = (GRID_N - 1) / 2;
/** Meters covered by one grid cell. */
export const CELL_M = EXTENT_M / GRID_N;

export interface Transform {
  /** Pixel edge length of one grid cell. */
  cellPx: number;
  /** Canvas x of the grid's left edge. */
  left: number;
  /** Canvas y of the grid's top edge. */
  top: number;
}

/**
 * Fit the grid square into a canvas, bottom-centering the anchor column.
 */
export function makeTransform(
  canvasWidth: number,
  canvasHeight: number,
  margin = 0,
): Transform {
  const side = Math.min(canvasWidth, canvasHeight) - 2 * margin;
  const cellPx = side / GRID_N;
  return {
    cellPx,
    left: (canvasWidth - side) / 2,
    top: canvasHeight - margin - side,
  };
}

/** Canvas position of a cell center. */
export function cellToCanvas(
  row: number,
  col: number,
  t: Transform,
): { x: number; y: number } {
  return {
    x: t.left + (col + 0.5) * t.cellPx,
    y: t.top + (row + 0.5) * t.cellPx,
  };
}

/** Canvas position of a normalized action (continuous, no snapping). */
export function actionToCanvas(
  ax: number,
  ay: number,
  t: Transform,
): { x: number; y: number } {
  const col = ax * (GRID_N - 1);
  const row = ANCHOR_ROW - ay * (GRID_N - 1);
  return cellToCanvas(row, col, t);
}

/** Canvas position of a vehicle-frame point (forward, right) in meters. */
export function metersToCanvas(
  forward: number,
  right: number,
  t: Transform,
): { x: number; y: number } {
  const anchor = cellToCanvas(ANCHOR_ROW, ANCHOR_COL, t);
  return {
    x: anchor.x + (right / CELL_M) * t.cellPx,
    y: anchor.y - (forward / CELL_M) * t.cellPx,
  };
}

/**
 * Invert a click to the normalized action of the nearest cell center.
 * Returns null for clicks outside the grid square.
 */
export function clickToAction(
  px: number,
  py: number,
  t: Transform,
): { ax: number; ay: number; row: number; col: number } | null {
  const side = GRID_N * t.cellPx;
  if (px < t.left || px > t.left + side || py < t.top || py > t.top + side) {
    return null;
  }
  const col = Math.min(
    GRID_N - 1,
    Math.max(0, Math.floor((px - t.left) / t.cellPx)),
  );
  const row = Math.min(
    GRID_N - 1,
    Math.max(0, Math.floor((py - t.top) / t.cellPx)),
  );
  return {
    ax: col / (GRID_N - 1),
    ay: (ANCHOR_ROW - row) / (GRID_N - 1),
    row,
    col,
  };
}
