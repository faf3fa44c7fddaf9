"""Seeded generation of test worlds: corridors, right-angle corners, lots.

Everything is carved out of a fully occupied canvas at 0.5 m resolution.
The reference path is the corridor centerline and the start pose sits at
its head.  Identical seeds give byte-identical world files.
"""

from __future__ import annotations

import math

import numpy as np

from udl.geometry import Pose2D
from udl.world import WorldMap

CELL = 0.5  # meters
TEMPLATES = ("corridor", "right_angle", "lot")


def _carve_rect(cells: np.ndarray, x0: float, y0: float, x1: float, y1: float) -> None:
    """Mark the axis-aligned rectangle [x0,x1) x [y0,y1) drivable."""
    h, w = cells.shape
    i0 = max(int(math.floor(x0 / CELL)), 0)
    i1 = min(int(math.ceil(x1 / CELL)), w)
    j0 = max(int(math.floor(y0 / CELL)), 0)
    j1 = min(int(math.ceil(y1 / CELL)), h)
    cells[j0:j1, i0:i1] = 0


def _fill_rect(cells: np.ndarray, x0: float, y0: float, x1: float, y1: float) -> None:
    h, w = cells.shape
    i0 = max(int(math.floor(x0 / CELL)), 0)
    i1 = min(int(math.ceil(x1 / CELL)), w)
    j0 = max(int(math.floor(y0 / CELL)), 0)
    j1 = min(int(math.ceil(y1 / CELL)), h)
    cells[j0:j1, i0:i1] = 1


def _densify(points: list[tuple[float, float]], step: float = 1.0):
    """Resample a polyline so consecutive vertices are at most ``step`` apart."""
    out: list[tuple[float, float]] = [points[0]]
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        seg = math.hypot(x1 - x0, y1 - y0)
        n = max(int(math.ceil(seg / step)), 1)
        for k in range(1, n + 1):
            t = k / n
            out.append((x0 + t * (x1 - x0), y0 + t * (y1 - y0)))
    return out


def _corridor(rng: np.random.Generator, width, length, obstacles) -> WorldMap:
    width = float(rng.uniform(3.0, 8.0)) if width is None else float(width)
    length = float(rng.uniform(30.0, 50.0)) if length is None else float(length)
    margin = 4.0
    wx = length + 2 * margin
    wy = width + 2 * margin
    cells = np.ones((int(round(wy / CELL)), int(round(wx / CELL))), dtype=np.uint8)
    y_mid = wy / 2.0
    _carve_rect(cells, margin, y_mid - width / 2, margin + length, y_mid + width / 2)

    if obstacles is None:
        obstacles = int(rng.integers(0, 3)) if width >= 5.0 else 0
    for _ in range(obstacles):
        # a parked block against one wall, leaving >= 3 m of passage
        ox = float(rng.uniform(margin + 8.0, margin + length - 8.0))
        depth = min(float(rng.uniform(0.5, 1.5)), width - 3.0)
        if depth <= 0:
            continue
        side = int(rng.integers(2))
        if side == 0:
            _fill_rect(cells, ox, y_mid - width / 2, ox + 2.5, y_mid - width / 2 + depth)
        else:
            _fill_rect(cells, ox, y_mid + width / 2 - depth, ox + 2.5, y_mid + width / 2)

    ref = _densify([(margin + 2.0, y_mid), (margin + length - 6.0, y_mid)])
    start = Pose2D(margin + 2.0, y_mid, 0.0)
    return WorldMap(cells.shape[1], cells.shape[0], CELL, cells, start, tuple(ref))


def _right_angle(rng: np.random.Generator, width, length, obstacles) -> WorldMap:
    width = float(rng.uniform(4.5, 8.0)) if width is None else float(width)
    leg = float(rng.uniform(18.0, 30.0)) if length is None else float(length)
    margin = 4.0
    wx = margin + leg + width + margin
    wy = margin + leg + width + margin
    cells = np.ones((int(round(wy / CELL)), int(round(wx / CELL))), dtype=np.uint8)
    y0 = margin  # horizontal leg along the bottom, then up the right side
    _carve_rect(cells, margin, y0, margin + leg + width, y0 + width)
    _carve_rect(cells, margin + leg, y0, margin + leg + width, y0 + width + leg)

    cx = margin + leg + width / 2.0  # vertical centerline x
    cy = y0 + width / 2.0  # horizontal centerline y
    # cut the corner along the diagonal of the (drivable) corner square
    corner_cut = width / 4.0
    pts = [
        (margin + 2.0, cy),
        (cx - corner_cut, cy),
        (cx, cy + corner_cut),
        (cx, y0 + width + leg - 6.0),
    ]
    ref = _densify(pts)
    start = Pose2D(margin + 2.0, cy, 0.0)
    return WorldMap(cells.shape[1], cells.shape[0], CELL, cells, start, tuple(ref))


def _lot(rng: np.random.Generator, width, length, obstacles) -> WorldMap:
    aisle = float(rng.uniform(5.0, 8.0)) if width is None else float(width)
    span = float(rng.uniform(26.0, 36.0)) if length is None else float(length)
    margin = 4.0
    slot_depth = 5.0
    wx = span + 2 * margin
    wy = aisle + slot_depth + 2 * margin
    cells = np.ones((int(round(wy / CELL)), int(round(wx / CELL))), dtype=np.uint8)
    # driving aisle with a row of parking slots along its left side
    _carve_rect(cells, margin, margin, margin + span, margin + aisle)
    row_y0 = margin + aisle
    n_slots = max(int((span - 4.0) // 3.0), 1)
    if obstacles is None:
        obstacles = n_slots
    filled = rng.random(n_slots) < 0.7
    for k in range(min(n_slots, obstacles)):
        sx = margin + 2.0 + k * 3.0
        # empty slots become drivable dead-end indentations
        if not filled[k]:
            _carve_rect(cells, sx + 0.3, row_y0, sx + 2.7, row_y0 + slot_depth)

    cy = margin + aisle / 2.0
    ref = _densify([(margin + 2.0, cy), (margin + span - 6.0, cy)])
    start = Pose2D(margin + 2.0, cy, 0.0)
    return WorldMap(cells.shape[1], cells.shape[0], CELL, cells, start, tuple(ref))


def generate_world(
    seed: int,
    template: str,
    width: float | None = None,
    length: float | None = None,
    obstacles: int | None = None,
) -> WorldMap:
    """Build one deterministic world from a template.

    ``width``, ``length``, and ``obstacles`` override the seeded draws
    when given (useful for held-out evaluation geometry).
    """
    if template not in TEMPLATES:
        raise ValueError(f"unknown template {template!r}, expected one of {TEMPLATES}")
    rng = np.random.default_rng(seed)
    builder = {"corridor": _corridor, "right_angle": _right_angle, "lot": _lot}
    return builder[template](rng, width, length, obstacles)
